#include "nkpcast/info_checks.hpp"

#include <cmath>
#include <random>

namespace nkpcast::info {

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

void validate(const JointDistribution& d) {
  if (d.nx == 0 || d.ny == 0 || d.nz == 0 ||
      d.p.size() != d.nx * d.ny * d.nz) {
    fail(ErrorCode::InvalidDistribution, "distribution: bad dimensions");
  }
  double total = 0.0;
  for (double v : d.p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::InvalidDistribution, "distribution: negative entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    fail(ErrorCode::InvalidDistribution, "distribution: mass != 1");
  }
}

JointDistribution random_distribution(std::size_t nx, std::size_t ny,
                                      std::size_t nz, std::uint64_t seed) {
  JointDistribution d;
  d.nx = nx;
  d.ny = ny;
  d.nz = nz;
  d.p.resize(nx * ny * nz);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0.0;
  for (double& v : d.p) {
    v = u(rng);
    total += v;
  }
  for (double& v : d.p) v /= total;
  // Re-normalize exactly within tolerance of validate().
  double check = 0.0;
  for (double v : d.p) check += v;
  d.p[0] += 1.0 - check;
  return d;
}

double entropy_z(const JointDistribution& d) {
  validate(d);
  double h = 0.0;
  for (std::size_t z = 0; z < d.nz; ++z) {
    double pz = 0.0;
    for (std::size_t x = 0; x < d.nx; ++x) {
      for (std::size_t y = 0; y < d.ny; ++y) pz += d.at(x, y, z);
    }
    h -= xlogx(pz);
  }
  return h;
}

double cond_entropy_z_given_x(const JointDistribution& d) {
  validate(d);
  // H(Z|X) = -sum_{x,z} p(x,z) log(p(x,z)/p(x))
  double h = 0.0;
  for (std::size_t x = 0; x < d.nx; ++x) {
    double px = 0.0;
    std::vector<double> pxz(d.nz, 0.0);
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t z = 0; z < d.nz; ++z) {
        pxz[z] += d.at(x, y, z);
      }
    }
    for (double v : pxz) px += v;
    if (px <= 0.0) continue;
    for (double v : pxz) {
      if (v > 0.0) h -= v * std::log(v / px);
    }
  }
  return h;
}

double cond_entropy_z_given_xy(const JointDistribution& d) {
  validate(d);
  double h = 0.0;
  for (std::size_t x = 0; x < d.nx; ++x) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      double pxy = 0.0;
      for (std::size_t z = 0; z < d.nz; ++z) pxy += d.at(x, y, z);
      if (pxy <= 0.0) continue;
      for (std::size_t z = 0; z < d.nz; ++z) {
        const double v = d.at(x, y, z);
        if (v > 0.0) h -= v * std::log(v / pxy);
      }
    }
  }
  return h;
}

double cond_mutual_info_zy_given_x(const JointDistribution& d) {
  // I(Z;Y|X) = sum p(x,y,z) log( p(x) p(x,y,z) / (p(x,y) p(x,z)) )
  validate(d);
  double info = 0.0;
  for (std::size_t x = 0; x < d.nx; ++x) {
    double px = 0.0;
    std::vector<double> pxy(d.ny, 0.0), pxz(d.nz, 0.0);
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t z = 0; z < d.nz; ++z) {
        const double v = d.at(x, y, z);
        pxy[y] += v;
        pxz[z] += v;
        px += v;
      }
    }
    if (px <= 0.0) continue;
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t z = 0; z < d.nz; ++z) {
        const double v = d.at(x, y, z);
        if (v > 0.0 && pxy[y] > 0.0 && pxz[z] > 0.0) {
          info += v * std::log(px * v / (pxy[y] * pxz[z]));
        }
      }
    }
  }
  return info;
}

EntropyMonotonicityResult check_entropy_monotonicity(const JointDistribution& d) {
  EntropyMonotonicityResult r;
  r.h_z_given_x = cond_entropy_z_given_x(d);
  r.h_z_given_xy = cond_entropy_z_given_xy(d);
  r.i_zy_given_x = cond_mutual_info_zy_given_x(d);
  r.pass = (r.h_z_given_xy <= r.h_z_given_x + 1e-12) &&
           (std::abs((r.h_z_given_x - r.h_z_given_xy) - r.i_zy_given_x) <
            1e-10);
  return r;
}

bool check_tower(const JointDistribution& d) {
  validate(d);
  for (std::size_t x = 0; x < d.nx; ++x) {
    double px = 0.0;
    std::vector<double> pxy(d.ny, 0.0);
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t z = 0; z < d.nz; ++z) pxy[y] += d.at(x, y, z);
      px += pxy[y];
    }
    if (px <= 0.0) continue;  // conditioning undefined, skip the slice
    for (std::size_t z = 0; z < d.nz; ++z) {
      double lhs = 0.0;  // sum_y P(y|x) P(z|x,y)
      double pxz = 0.0;
      for (std::size_t y = 0; y < d.ny; ++y) {
        pxz += d.at(x, y, z);
        if (pxy[y] <= 0.0) continue;
        lhs += (pxy[y] / px) * (d.at(x, y, z) / pxy[y]);
      }
      if (std::abs(lhs - pxz / px) > 1e-12) return false;
    }
  }
  return true;
}

LossMatrix random_loss(std::size_t nz, std::size_t nzhat, std::uint64_t seed) {
  LossMatrix loss;
  loss.nz = nz;
  loss.nzhat = nzhat;
  loss.l.resize(nz * nzhat);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : loss.l) v = u(rng);
  return loss;
}

BayesRiskResult check_bayes_risk(const JointDistribution& d,
                                 const LossMatrix& loss) {
  validate(d);
  if (loss.nz != d.nz || loss.nzhat == 0 ||
      loss.l.size() != loss.nz * loss.nzhat) {
    fail(ErrorCode::InvalidArgument, "bayes risk: loss matrix shape mismatch");
  }
  BayesRiskResult r;

  // Optimal rule per conditioning cell, by exhaustive minimization over
  // decisions; the cell's contribution is min_zhat sum_z P(z, cell) L(z, zhat).
  auto cell_risk = [&](const std::vector<double>& pz_cell) {
    double best = 1e300;
    for (std::size_t zh = 0; zh < loss.nzhat; ++zh) {
      double risk = 0.0;
      for (std::size_t z = 0; z < d.nz; ++z) {
        risk += pz_cell[z] * loss.at(z, zh);
      }
      best = std::min(best, risk);
    }
    return best;
  };

  for (std::size_t x = 0; x < d.nx; ++x) {
    std::vector<double> pz_x(d.nz, 0.0);
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::vector<double> pz_xy(d.nz, 0.0);
      for (std::size_t z = 0; z < d.nz; ++z) {
        const double v = d.at(x, y, z);
        pz_xy[z] = v;
        pz_x[z] += v;
      }
      r.risk_xy += cell_risk(pz_xy);
    }
    r.risk_x += cell_risk(pz_x);
  }
  r.pass = r.risk_xy <= r.risk_x + 1e-12;
  return r;
}

}  // namespace nkpcast::info
