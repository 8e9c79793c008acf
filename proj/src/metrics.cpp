#include "nkpcast/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace nkpcast::metrics {

namespace {

double planar_dist(const geo::GeoPoint& a, const geo::GeoPoint& b) {
  return std::hypot(a.lat_deg - b.lat_deg, a.lon_deg - b.lon_deg);
}

// Wraps an angle difference into (-pi, pi].
double wrap_angle(double x) {
  const double two_pi = 2.0 * geo::kPi;
  double w = std::fmod(x, two_pi);
  if (w <= -geo::kPi) w += two_pi;
  if (w > geo::kPi) w -= two_pi;
  return w;
}

}  // namespace

double msep(const Polyline& pred, const Polyline& truth) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::LengthMismatch, "msep: polyline lengths differ");
  }
  if (pred.empty()) {
    fail(ErrorCode::EmptyInput, "msep: empty polylines");
  }
  double acc = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double dlat = pred[t].lat_deg - truth[t].lat_deg;
    const double dlon = pred[t].lon_deg - truth[t].lon_deg;
    acc += dlat * dlat + dlon * dlon;
  }
  return acc / static_cast<double>(pred.size());
}

std::vector<double> curvature_profile(const Polyline& poly) {
  if (poly.empty()) {
    fail(ErrorCode::EmptyInput, "curvature_profile: empty polyline");
  }
  const std::size_t n = poly.size();
  std::vector<double> kappa(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double dx0 = poly[i].lat_deg - poly[i - 1].lat_deg;
    const double dy0 = poly[i].lon_deg - poly[i - 1].lon_deg;
    const double dx1 = poly[i + 1].lat_deg - poly[i].lat_deg;
    const double dy1 = poly[i + 1].lon_deg - poly[i].lon_deg;
    const double len0 = std::hypot(dx0, dy0);
    const double len1 = std::hypot(dx1, dy1);
    const double mean_len = 0.5 * (len0 + len1);
    if (len0 == 0.0 || len1 == 0.0 || mean_len == 0.0) {
      kappa[i] = 0.0;  // stationary point, heading undefined
      continue;
    }
    const double dtheta =
        wrap_angle(std::atan2(dy1, dx1) - std::atan2(dy0, dx0));
    kappa[i] = dtheta / mean_len;
  }
  return kappa;
}

std::vector<double> smooth_curvature(const std::vector<double>& profile) {
  std::vector<double> out(profile.size(), 0.0);
  for (std::size_t i = 1; i + 1 < profile.size(); ++i) {
    out[i] = (profile[i - 1] + profile[i] + profile[i + 1]) / 3.0;
  }
  return out;
}

double msec(const Polyline& pred, const Polyline& truth) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::LengthMismatch, "msec: polyline lengths differ");
  }
  if (pred.empty()) {
    fail(ErrorCode::EmptyInput, "msec: empty polylines");
  }
  const auto kp = smooth_curvature(curvature_profile(pred));
  const auto kt = smooth_curvature(curvature_profile(truth));
  double acc = 0.0;
  for (std::size_t i = 0; i < kp.size(); ++i) {
    const double d = kp[i] - kt[i];
    acc += d * d;
  }
  return acc / static_cast<double>(kp.size());
}

double discrete_frechet(const Polyline& a, const Polyline& b) {
  if (a.empty() || b.empty()) {
    fail(ErrorCode::EmptyInput, "discrete_frechet: empty polyline");
  }
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Row-rolling DP; dp[j] holds dp(i-1, j) while filling row i.
  std::vector<double> dp(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double diag = dp[0];  // dp(i-1, j-1)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = planar_dist(a[i], b[j]);
      double reach;
      if (i == 0 && j == 0) {
        reach = d;
      } else if (i == 0) {
        reach = std::max(dp[j - 1], d);
      } else if (j == 0) {
        reach = std::max(dp[j], d);
      } else {
        reach = std::max(std::min({dp[j], dp[j - 1], diag}), d);
      }
      diag = dp[j];
      dp[j] = reach;
    }
  }
  return dp[m - 1];
}

double mfd(const std::vector<std::pair<Polyline, Polyline>>& pairs) {
  if (pairs.empty()) {
    fail(ErrorCode::EmptyInput, "mfd: empty batch");
  }
  double acc = 0.0;
  for (const auto& [pred, truth] : pairs) {
    acc += discrete_frechet(pred, truth);
  }
  return acc / static_cast<double>(pairs.size());
}

}  // namespace nkpcast::metrics
