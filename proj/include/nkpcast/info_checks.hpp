#pragma once

// Brute-force verification of the conditioning inequalities on finite
// discrete distributions: conditional-entropy monotonicity, the tower
// property, and Bayes-risk monotonicity. Entropies are in nats.

#include <cstdint>
#include <vector>

#include "nkpcast/error.hpp"

namespace nkpcast::info {

// Joint distribution over (X, Y, Z) as a dense 3-axis table,
// index = (x * ny + y) * nz + z.
struct JointDistribution {
  std::size_t nx = 0, ny = 0, nz = 0;
  std::vector<double> p;

  double at(std::size_t x, std::size_t y, std::size_t z) const {
    return p[(x * ny + y) * nz + z];
  }
};

// Validates nonnegativity and unit total mass (tolerance 1e-12).
void validate(const JointDistribution& d);

// Seeded random distribution with independent uniform(0,1) weights,
// normalized.
JointDistribution random_distribution(std::size_t nx, std::size_t ny,
                                      std::size_t nz, std::uint64_t seed);

double entropy_z(const JointDistribution& d);        // H(Z)
double cond_entropy_z_given_x(const JointDistribution& d);   // H(Z|X)
double cond_entropy_z_given_xy(const JointDistribution& d);  // H(Z|X,Y)
double cond_mutual_info_zy_given_x(const JointDistribution& d);  // I(Z;Y|X)

struct EntropyMonotonicityResult {
  double h_z_given_x = 0.0;
  double h_z_given_xy = 0.0;
  double i_zy_given_x = 0.0;
  bool pass = false;
};

// H(Z|X,Y) <= H(Z|X) + 1e-12 and the chain-rule identity
// H(Z|X) - H(Z|X,Y) = I(Z;Y|X) within 1e-10.
EntropyMonotonicityResult check_entropy_monotonicity(const JointDistribution& d);

// For every (x, z) with P(x) > 0: sum_y P(y|x) P(z|x,y) = P(z|x) within
// 1e-12; zero-probability conditioning cells are skipped.
bool check_tower(const JointDistribution& d);

// |Z| x |Zhat| nonnegative loss table.
struct LossMatrix {
  std::size_t nz = 0, nzhat = 0;
  std::vector<double> l;
  double at(std::size_t z, std::size_t zhat) const { return l[z * nzhat + zhat]; }
};

LossMatrix random_loss(std::size_t nz, std::size_t nzhat, std::uint64_t seed);

struct BayesRiskResult {
  double risk_x = 0.0;   // best rule seeing X only
  double risk_xy = 0.0;  // best rule seeing (X, Y)
  bool pass = false;     // risk_xy <= risk_x + 1e-12
};

BayesRiskResult check_bayes_risk(const JointDistribution& d,
                                 const LossMatrix& loss);

}  // namespace nkpcast::info
