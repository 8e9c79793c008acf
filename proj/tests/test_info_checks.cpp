#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "nkpcast/info_checks.hpp"
#include "oracles.hpp"

using namespace nkpcast;
using info::JointDistribution;

namespace {
ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

// Product distribution P(x)P(y)P(z) from three seeded marginals.
JointDistribution product_distribution(std::size_t nx, std::size_t ny,
                                       std::size_t nz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  auto marginal = [&](std::size_t n) {
    std::vector<double> m(n);
    double total = 0.0;
    for (auto& v : m) total += (v = u(rng));
    for (auto& v : m) v /= total;
    return m;
  };
  const auto px = marginal(nx), py = marginal(ny), pz = marginal(nz);
  JointDistribution d{nx, ny, nz, std::vector<double>(nx * ny * nz)};
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z)
        d.p[(x * ny + y) * nz + z] = px[x] * py[y] * pz[z];
  return d;
}
}  // namespace

TEST_CASE("validate rejects malformed tables") {
  JointDistribution neg{1, 1, 2, {1.5, -0.5}};
  CHECK(code_of([&] { info::validate(neg); }) ==
        ErrorCode::InvalidDistribution);
  JointDistribution off{1, 1, 2, {0.6, 0.6}};
  CHECK(code_of([&] { info::validate(off); }) ==
        ErrorCode::InvalidDistribution);
  JointDistribution bad_dims{0, 1, 2, {}};
  CHECK(code_of([&] { info::validate(bad_dims); }) ==
        ErrorCode::InvalidDistribution);
  JointDistribution ok{1, 1, 2, {0.25, 0.75}};
  CHECK(code_of([&] { info::validate(ok); }) == ErrorCode::Ok);
}

TEST_CASE("entropy: uniform binary is ln 2, deterministic Z|X,Y is 0") {
  JointDistribution d{1, 1, 2, {0.5, 0.5}};
  CHECK(info::entropy_z(d) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Z fixed by (x, y): z = x XOR y on a uniform 2x2 base.
  JointDistribution det{2, 2, 2, std::vector<double>(8, 0.0)};
  det.p[(0 * 2 + 0) * 2 + 0] = 0.25;
  det.p[(0 * 2 + 1) * 2 + 1] = 0.25;
  det.p[(1 * 2 + 0) * 2 + 1] = 0.25;
  det.p[(1 * 2 + 1) * 2 + 0] = 0.25;
  CHECK(info::cond_entropy_z_given_xy(det) == doctest::Approx(0.0));
  CHECK(info::entropy_z(det) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("entropies match the long-double summation oracle within 1e-12") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto d = info::random_distribution(2 + seed % 3, 2 + (seed / 3) % 3,
                                             2 + (seed / 9) % 3, seed);
    CHECK(std::abs(info::entropy_z(d) - oracles::entropy_z_oracle(d)) < 1e-12);
    CHECK(std::abs(info::cond_entropy_z_given_x(d) -
                   oracles::cond_entropy_z_given_x_oracle(d)) < 1e-12);
    CHECK(std::abs(info::cond_entropy_z_given_xy(d) -
                   oracles::cond_entropy_z_given_xy_oracle(d)) < 1e-12);
  }
}

TEST_CASE("entropy monotonicity: independence equality and deterministic case") {
  // Product distribution: Z independent of Y given X, so the gap vanishes.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto d = product_distribution(3, 3, 3, seed);
    const auto r = info::check_entropy_monotonicity(d);
    CHECK(r.pass);
    CHECK(std::abs(r.h_z_given_x - r.h_z_given_xy) < 1e-12);
    CHECK(std::abs(r.i_zy_given_x) < 1e-12);
  }

  // Z = Y deterministically: conditioning on Y reveals Z completely.
  JointDistribution zy{2, 2, 2, std::vector<double>(8, 0.0)};
  zy.p[(0 * 2 + 0) * 2 + 0] = 0.25;
  zy.p[(0 * 2 + 1) * 2 + 1] = 0.25;
  zy.p[(1 * 2 + 0) * 2 + 0] = 0.25;
  zy.p[(1 * 2 + 1) * 2 + 1] = 0.25;
  const auto r = info::check_entropy_monotonicity(zy);
  CHECK(r.pass);
  CHECK(r.h_z_given_xy == doctest::Approx(0.0));
  CHECK(r.h_z_given_x >= 0.0);
}

TEST_CASE("entropy monotonicity: 1000 seeded random instances") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto d = info::random_distribution(3, 3, 3, seed);
    const auto r = info::check_entropy_monotonicity(d);
    CHECK(r.pass);
    CHECK(r.h_z_given_xy <= r.h_z_given_x + 1e-12);
    CHECK(std::abs((r.h_z_given_x - r.h_z_given_xy) - r.i_zy_given_x) < 1e-10);
    CHECK(r.i_zy_given_x >= -1e-12);
  }
}

TEST_CASE("tower property: products, zero slices, 1000 random instances") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CHECK(info::check_tower(product_distribution(3, 2, 4, seed)));
  }

  // Zero-probability x = 0 slice: skipped, remaining slices still checked.
  JointDistribution d{2, 2, 2, std::vector<double>(8, 0.0)};
  d.p[(1 * 2 + 0) * 2 + 0] = 0.4;
  d.p[(1 * 2 + 0) * 2 + 1] = 0.1;
  d.p[(1 * 2 + 1) * 2 + 0] = 0.2;
  d.p[(1 * 2 + 1) * 2 + 1] = 0.3;
  CHECK(info::check_tower(d));

  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    CHECK(info::check_tower(info::random_distribution(3, 3, 3, seed)));
  }
}

TEST_CASE("bayes risk: deterministic Z|X and uninformative Y") {
  // 0/1 loss; Z determined by X alone: both rules are perfect.
  info::LossMatrix zero_one{2, 2, {0, 1, 1, 0}};
  JointDistribution det{2, 2, 2, std::vector<double>(8, 0.0)};
  det.p[(0 * 2 + 0) * 2 + 0] = 0.25;
  det.p[(0 * 2 + 1) * 2 + 0] = 0.25;
  det.p[(1 * 2 + 0) * 2 + 1] = 0.25;
  det.p[(1 * 2 + 1) * 2 + 1] = 0.25;
  const auto r = info::check_bayes_risk(det, zero_one);
  CHECK(r.pass);
  CHECK(r.risk_x == doctest::Approx(0.0));
  CHECK(r.risk_xy == doctest::Approx(0.0));

  // Y independent of everything: seeing it cannot help.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto d = product_distribution(3, 3, 2, seed);
    const auto rr = info::check_bayes_risk(d, zero_one);
    CHECK(rr.pass);
    CHECK(std::abs(rr.risk_x - rr.risk_xy) < 1e-12);
  }
}

TEST_CASE("bayes risk: 1000 seeded random (distribution, loss) pairs") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto d = info::random_distribution(3, 3, 3, seed);
    const auto loss = info::random_loss(3, 3, seed + 5000);
    const auto r = info::check_bayes_risk(d, loss);
    CHECK(r.pass);
    CHECK(r.risk_xy <= r.risk_x + 1e-12);
    CHECK(r.risk_x >= 0.0);
    CHECK(r.risk_xy >= 0.0);
  }
}

TEST_CASE("random_distribution is seeded and valid") {
  const auto a = info::random_distribution(3, 3, 3, 11);
  const auto b = info::random_distribution(3, 3, 3, 11);
  CHECK(a.p == b.p);
  const auto c = info::random_distribution(3, 3, 3, 12);
  CHECK(a.p != c.p);
  info::validate(a);
}
