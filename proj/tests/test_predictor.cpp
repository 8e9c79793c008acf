#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "nkpcast/predictor.hpp"
#include "oracles.hpp"

using namespace nkpcast;
using pipeline::FeatureMatrix;
using pipeline::Window;

namespace {
const geo::EarthModel kEarth{};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

pipeline::NormalizationSpec wide_spec() {
  pipeline::NormalizationSpec spec;
  spec.lat_min = -5.0;
  spec.lat_max = 5.0;
  spec.lon_min = -5.0;
  spec.lon_max = 5.0;
  spec.dt_s = 300.0;
  return spec;
}

// Window whose samples follow a kinematic rollout; velocities are recomputed
// from consecutive positions so the one-step consistency property holds.
Window rollout_window(const geo::GeoPoint& start,
                      const std::vector<geo::VelocityOverGround>& controls) {
  const auto pts = geo::rollout(start, controls, 300.0, kEarth);
  Window w;
  w.dt_s = 300.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pipeline::TrackSample s;
    s.pos = pts[i];
    const std::size_t j = (i + 1 < pts.size()) ? i : i - 1;
    s.vel = geo::velocity_from_displacement(pts[j], pts[j + 1], 300.0, kEarth);
    w.samples.push_back(s);
  }
  return w;
}

Window due_east_window(std::size_t n, double sog = 6.0) {
  return rollout_window(
      {0.0, 0.0}, std::vector<geo::VelocityOverGround>(
                      n - 1, {sog, geo::kPi / 2.0}));
}

Window random_curvy_window(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> usog(3.0, 8.0), ucog(0.0, 2 * geo::kPi);
  std::vector<geo::VelocityOverGround> controls;
  double course = ucog(rng);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    course += 0.15 * (usog(rng) - 5.5);  // smooth wander
    controls.push_back({usog(rng), geo::wrap_course_rad(course)});
  }
  std::uniform_real_distribution<double> u0(-1.0, 1.0);
  return rollout_window({u0(rng), u0(rng)}, controls);
}

FeatureMatrix random_features(std::size_t rows, std::size_t cols,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  FeatureMatrix f(rows, cols);
  for (auto& v : f.data) v = u(rng);
  return f;
}

motion::PredictorParams zeroed(std::size_t context, std::size_t channels,
                               std::size_t hidden) {
  auto p = motion::init_predictor(context, channels, hidden, 1);
  std::fill(p.w.begin(), p.w.end(), 0.0);
  return p;
}

// Parameters that always output the constant pair (v0, v1): every weight
// zero except the output bias.
motion::PredictorParams constant_output(std::size_t context,
                                        std::size_t channels,
                                        std::size_t hidden, double v0,
                                        double v1) {
  auto p = zeroed(context, channels, hidden);
  p.w[p.w.size() - 2] = v0;
  p.w[p.w.size() - 1] = v1;
  return p;
}
}  // namespace

TEST_CASE("assemble_channels: identity without NKP, broadcast with it") {
  const auto spec = wide_spec();
  std::mt19937_64 rng(3);
  const auto f4 = random_features(10, 4, rng);

  const auto same = motion::assemble_channels(f4, std::nullopt, spec);
  CHECK(same.cols == 4);
  CHECK(same.data == f4.data);

  const geo::GeoPoint nkp1{2.5, -2.5}, nkp2{-1.0, 4.0};
  const auto a = motion::assemble_channels(f4, nkp1, spec);
  const auto b = motion::assemble_channels(f4, nkp2, spec);
  REQUIRE(a.cols == 6);
  REQUIRE(b.cols == 6);
  for (std::size_t r = 0; r < a.rows; ++r) {
    CHECK(a.at(r, 4) == doctest::Approx(pipeline::norm_lat(2.5, spec)));
    CHECK(a.at(r, 5) == doctest::Approx(pipeline::norm_lon(-2.5, spec)));
    // Two NKPs on the same history differ only in columns 5-6.
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(a.at(r, c) == f4.at(r, c));
      CHECK(b.at(r, c) == f4.at(r, c));
    }
    CHECK(a.at(r, 4) != b.at(r, 4));
    CHECK(a.at(r, 5) != b.at(r, 5));
  }

  CHECK(code_of([&] {
          motion::assemble_channels(f4, geo::GeoPoint{80.0, 0.0}, spec);
        }) == ErrorCode::OutOfBounds);
}

TEST_CASE("forward_step: zero map, determinism, shape guard") {
  std::mt19937_64 rng(5);
  const auto ctx = random_features(4, 4, rng);
  const auto zp = zeroed(4, 4, 6);
  const auto out = motion::forward_step(ctx, zp);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  const auto live = motion::init_predictor(4, 4, 6, 7);
  const auto o1 = motion::forward_step(ctx, live);
  const auto o2 = motion::forward_step(ctx, live);
  CHECK(o1[0] == o2[0]);
  CHECK(o1[1] == o2[1]);

  CHECK(code_of([&] {
          motion::forward_step(random_features(5, 4, rng), live);
        }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("loss_vol: zeros, memorized constant velocity, mean semantics") {
  const auto spec = wide_spec();

  // Stationary track: all velocity channels zero, zero params are perfect.
  Window still;
  still.dt_s = 300.0;
  for (int i = 0; i < 12; ++i) still.samples.push_back({{1.0, 1.0}, {0, 0}});
  const auto f_still = pipeline::normalize(still, spec, kEarth);
  CHECK(motion::loss_vol({f_still}, zeroed(4, 4, 6)) == 0.0);

  // Constant due-east velocity memorized in the output bias.
  const auto w = due_east_window(30);
  const auto f = pipeline::normalize(w, spec, kEarth);
  const auto p = constant_output(4, 4, 6, f.at(0, 2), f.at(0, 3));
  CHECK(motion::loss_vol({f}, p) < 1e-12);

  // Duplicated batch: mean semantics.
  const auto live = motion::init_predictor(4, 4, 6, 9);
  const double l1 = motion::loss_vol({f}, live);
  const double l2 = motion::loss_vol({f, f}, live);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-15));

  std::mt19937_64 rng(11);
  CHECK(code_of([&] {
          motion::loss_vol({random_features(4, 4, rng)}, live);
        }) == ErrorCode::TooShort);
  CHECK(code_of([&] { motion::loss_vol({}, live); }) == ErrorCode::EmptyInput);
}

TEST_CASE("loss_coord: stationary zero, perfect velocities, zero-velocity oracle") {
  const auto spec = wide_spec();

  Window still;
  still.dt_s = 300.0;
  for (int i = 0; i < 12; ++i) still.samples.push_back({{1.0, 1.0}, {0, 0}});
  const auto f_still = pipeline::normalize(still, spec, kEarth);
  CHECK(motion::loss_coord({still}, {f_still}, zeroed(4, 4, 6), spec, kEarth) ==
        0.0);

  // Perfect velocity predictions: residual is the one-step consistency gap.
  const auto w = due_east_window(30);
  const auto f = pipeline::normalize(w, spec, kEarth);
  const auto p = constant_output(4, 4, 6, f.at(0, 2), f.at(0, 3));
  CHECK(motion::loss_coord({w}, {f}, p, spec, kEarth) < 1e-12);

  // Zero velocity prediction on a moving track: the error at each step is
  // exactly the normalized per-step displacement.
  const auto curvy = random_curvy_window(13, 20);
  const auto fc = pipeline::normalize(curvy, spec, kEarth);
  const std::size_t context = 4;
  double expected = 0.0;
  std::size_t count = 0;
  for (std::size_t t = context - 1; t + 1 < fc.rows; ++t) {
    const double d0 = fc.at(t, 0) - fc.at(t + 1, 0);
    const double d1 = fc.at(t, 1) - fc.at(t + 1, 1);
    expected += d0 * d0 + d1 * d1;
    ++count;
  }
  expected /= static_cast<double>(count);
  const double got =
      motion::loss_coord({curvy}, {fc}, zeroed(context, 4, 6), spec, kEarth);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("grad_vol matches finite differences on 20 instances") {
  std::mt19937_64 rng(17);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t channels = (inst % 2 == 0) ? 4 : 6;
    auto params = motion::init_predictor(3, channels, 4, 200 + inst);
    const std::vector<FeatureMatrix> batch = {
        random_features(6, channels, rng), random_features(7, channels, rng)};

    std::vector<double> grad;
    motion::grad_vol(batch, params, grad);
    REQUIRE(grad.size() == params.w.size());

    const auto fd = oracles::finite_difference_grad(
        [&](const std::vector<double>& w) {
          auto p = params;
          p.w = w;
          return motion::loss_vol(batch, p);
        },
        params.w);
    CHECK(oracles::max_relative_error(grad, fd) < 1e-4);
  }
}

TEST_CASE("grad_coord matches finite differences on 20 instances") {
  const auto spec = wide_spec();
  for (int inst = 0; inst < 20; ++inst) {
    auto params = motion::init_predictor(3, 4, 4, 300 + inst);
    // Scale parameters down so predicted velocities stay physical.
    for (auto& v : params.w) v *= 0.05;
    const auto w = random_curvy_window(400 + inst, 8);
    const auto f = pipeline::normalize(w, spec, kEarth);

    std::vector<double> grad;
    motion::grad_coord({w}, {f}, params, spec, kEarth, grad);
    REQUIRE(grad.size() == params.w.size());

    const auto fd = oracles::finite_difference_grad(
        [&](const std::vector<double>& wv) {
          auto p = params;
          p.w = wv;
          return motion::loss_coord({w}, {f}, p, spec, kEarth);
        },
        params.w);
    CHECK(oracles::max_relative_error(grad, fd) < 1e-4);
  }
}

TEST_CASE("train_alternating: zero cycles, determinism, loss decreases") {
  const auto spec = wide_spec();
  const auto w = random_curvy_window(21, 24);
  const auto f = pipeline::normalize(w, spec, kEarth);
  const auto init = motion::init_predictor(4, 4, 8, 23);

  motion::TrainSchedule none;
  none.cycles = 0;
  const auto r0 = motion::train_alternating({w}, {f}, none, init, spec, kEarth);
  CHECK(r0.params.w == init.w);
  CHECK(r0.vol_curve.empty());

  motion::TrainSchedule sched;
  sched.cycles = 1;
  sched.vol_epochs = 40;
  sched.bc_epochs = 5;
  sched.learning_rate = 0.05;
  sched.bc_learning_rate = 1e-4;
  const auto r1 = motion::train_alternating({w}, {f}, sched, init, spec, kEarth);
  const auto r2 = motion::train_alternating({w}, {f}, sched, init, spec, kEarth);
  CHECK(r1.params.w == r2.params.w);
  CHECK(r1.vol_curve == r2.vol_curve);
  REQUIRE(r1.vol_curve.size() == 40);
  REQUIRE(r1.coord_curve.size() == 5);
  CHECK(r1.vol_curve.back() < r1.vol_curve.front());

  CHECK(code_of([&] {
          motion::train_alternating({}, {}, sched, init, spec, kEarth);
        }) == ErrorCode::EmptyInput);
}

TEST_CASE("train_alternating overfits a single trajectory") {
  const auto spec = wide_spec();
  const auto w = random_curvy_window(31, 40);
  const auto f = pipeline::normalize(w, spec, kEarth);
  const auto init = motion::init_predictor(8, 4, 16, 33);

  motion::TrainSchedule sched;
  sched.cycles = 1;
  sched.vol_epochs = 800;
  sched.bc_epochs = 0;
  sched.learning_rate = 0.2;
  const auto r = motion::train_alternating({w}, {f}, sched, init, spec, kEarth);
  CHECK(r.vol_curve.back() < 1e-6);
}

TEST_CASE("rollout_predict: zero params hold position, horizon-1 base case") {
  const auto spec = wide_spec();
  const auto hist = due_east_window(10);
  motion::PredictionTask task{hist, 5, std::nullopt};

  const auto still = motion::rollout_predict(task, zeroed(4, 4, 6), spec, kEarth);
  REQUIRE(still.size() == 5);
  for (const auto& p : still) {
    CHECK(p.lat_deg == hist.samples.back().pos.lat_deg);
    CHECK(p.lon_deg == hist.samples.back().pos.lon_deg);
  }

  // horizon = 1 equals one kinematic step from the last history point.
  const auto params = motion::init_predictor(4, 4, 6, 41);
  motion::PredictionTask one{hist, 1, std::nullopt};
  const auto got = motion::rollout_predict(one, params, spec, kEarth);
  REQUIRE(got.size() == 1);

  const auto f = pipeline::normalize(hist, spec, kEarth);
  pipeline::FeatureMatrix ctx(4, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      ctx.at(r, c) = f.at(f.rows - 4 + r, c);
    }
  }
  const auto u = motion::forward_step(ctx, params);
  double a, b;
  pipeline::denormalize_velocity(u[0], u[1],
                                 hist.samples.back().pos.lat_deg, spec, kEarth,
                                 a, b);
  const auto want = geo::step(
      hist.samples.back().pos,
      {std::hypot(a, b), geo::wrap_course_rad(std::atan2(b, a))}, 300.0,
      kEarth);
  CHECK(got[0].lat_deg == doctest::Approx(want.lat_deg).epsilon(1e-14));
  CHECK(got[0].lon_deg == doctest::Approx(want.lon_deg).epsilon(1e-14));

  // Determinism: repeat is bit-identical.
  const auto again = motion::rollout_predict(one, params, spec, kEarth);
  CHECK(got[0].lat_deg == again[0].lat_deg);
  CHECK(got[0].lon_deg == again[0].lon_deg);
}

TEST_CASE("rollout_predict reproduces a memorized constant-velocity track") {
  const auto spec = wide_spec();
  const auto w = due_east_window(60);
  Window hist = w;
  hist.samples.resize(10);
  const auto f = pipeline::normalize(hist, spec, kEarth);
  const auto p = constant_output(4, 4, 6, f.at(0, 2), f.at(0, 3));

  motion::PredictionTask task{hist, 50, std::nullopt};
  const auto pred = motion::rollout_predict(task, p, spec, kEarth);
  REQUIRE(pred.size() == 50);
  metrics::Polyline truth;
  for (std::size_t i = 10; i < 60; ++i) truth.push_back(w.samples[i].pos);
  CHECK(metrics::msep(pred, truth) < 1e-6);
}

TEST_CASE("rollout_predict: channel flag must match NKP presence") {
  const auto spec = wide_spec();
  const auto hist = due_east_window(10);
  motion::PredictionTask no_nkp{hist, 2, std::nullopt};
  CHECK(code_of([&] {
          motion::rollout_predict(no_nkp, zeroed(4, 6, 6), spec, kEarth);
        }) == ErrorCode::ShapeMismatch);
  motion::PredictionTask with_nkp{hist, 2, geo::GeoPoint{1.0, 1.0}};
  CHECK(code_of([&] {
          motion::rollout_predict(with_nkp, zeroed(4, 4, 6), spec, kEarth);
        }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("conditioning on different NKPs changes the rollout") {
  const auto spec = wide_spec();
  const auto hist = due_east_window(10);
  auto params = motion::init_predictor(4, 6, 8, 47);
  // The default output head starts at zero; give it small random weights so
  // the prediction actually depends on the input channels.
  std::mt19937_64 rng(48);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (auto& v : params.w) {
    if (v == 0.0) v = u(rng);
  }
  motion::PredictionTask t1{hist, 8, geo::GeoPoint{3.0, 3.0}};
  motion::PredictionTask t2{hist, 8, geo::GeoPoint{-3.0, -3.0}};
  const auto r1 = motion::rollout_predict(t1, params, spec, kEarth);
  const auto r2 = motion::rollout_predict(t2, params, spec, kEarth);
  CHECK(metrics::msep(r1, r2) > 0.0);
}

TEST_CASE("cvm_baseline: stationary, exact on straight tracks, short guard") {
  Window still;
  still.dt_s = 300.0;
  for (int i = 0; i < 4; ++i) still.samples.push_back({{1.0, 1.0}, {0, 0}});
  const auto hold = motion::cvm_baseline({still, 3, std::nullopt}, kEarth);
  REQUIRE(hold.size() == 3);
  for (const auto& p : hold) {
    CHECK(p.lat_deg == 1.0);
    CHECK(p.lon_deg == 1.0);
  }

  const auto w = due_east_window(40);
  Window hist = w;
  hist.samples.resize(10);
  const auto pred = motion::cvm_baseline({hist, 30, std::nullopt}, kEarth);
  metrics::Polyline truth;
  for (std::size_t i = 10; i < 40; ++i) truth.push_back(w.samples[i].pos);
  CHECK(metrics::msep(pred, truth) < 1e-12);

  Window tiny;
  tiny.dt_s = 300.0;
  tiny.samples.push_back({{0, 0}, {0, 0}});
  CHECK(code_of([&] {
          motion::cvm_baseline({tiny, 1, std::nullopt}, kEarth);
        }) == ErrorCode::TooShort);
}

TEST_CASE("integrated_predict composes retrieval and conditioned rollout") {
  const auto spec = wide_spec();
  const auto hist = due_east_window(10);
  auto predictor = motion::init_predictor(4, 6, 8, 51);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (auto& v : predictor.w) {
    if (v == 0.0) v = u(rng);  // fill the zero-initialized output head
  }
  const auto encoder = nkp::init_encoder(6, 4, 52);

  // A single-entry database forces whichever label it contains.
  auto force = [&](const std::string& label, const geo::GeoPoint& coords) {
    nkp::ReferenceDb db;
    const auto f = pipeline::normalize(hist, spec, kEarth);
    db.dim = 4;
    db.entries.push_back({nkp::encode(f, encoder), label, 1, 0});
    db.label_coords[label] = coords;
    return db;
  };

  const geo::GeoPoint right{2.0, 2.0}, wrong{-4.0, 0.5};
  const auto forced_right = force("R", right);
  const auto ir = motion::integrated_predict(hist, 6, forced_right, encoder,
                                             predictor, 0.5, spec, kEarth);
  CHECK(ir.nkp.label == "R");
  const auto oracle =
      motion::rollout_predict({hist, 6, right}, predictor, spec, kEarth);
  REQUIRE(ir.trajectory.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(ir.trajectory[i].lat_deg == oracle[i].lat_deg);
    CHECK(ir.trajectory[i].lon_deg == oracle[i].lon_deg);
  }

  const auto forced_wrong = force("W", wrong);
  const auto iw = motion::integrated_predict(hist, 6, forced_wrong, encoder,
                                             predictor, 0.5, spec, kEarth);
  CHECK(iw.nkp.label == "W");
  const auto adversarial =
      motion::rollout_predict({hist, 6, wrong}, predictor, spec, kEarth);
  for (std::size_t i = 0; i < adversarial.size(); ++i) {
    CHECK(iw.trajectory[i].lat_deg == adversarial[i].lat_deg);
    CHECK(iw.trajectory[i].lon_deg == adversarial[i].lon_deg);
  }

  CHECK(code_of([&] {
          motion::integrated_predict(hist, 6, forced_right, encoder,
                                     motion::init_predictor(4, 4, 8, 3), 0.5,
                                     spec, kEarth);
        }) == ErrorCode::ShapeMismatch);
}
