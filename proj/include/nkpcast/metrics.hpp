#pragma once

// Multi-scale trajectory evaluation: point-wise position error (MSEP),
// smoothed-curvature error (MSEC), and mean discrete Frechet distance (MFD).
// All metrics treat (lat, lon) as planar coordinates in degrees.

#include <vector>

#include "nkpcast/error.hpp"
#include "nkpcast/geo.hpp"

namespace nkpcast::metrics {

using Polyline = std::vector<geo::GeoPoint>;

struct MetricsReport {
  double msep = 0.0;
  double msec = 0.0;
  double mfd = 0.0;
  double wall_time_s = 0.0;
  std::size_t n_samples = 0;
};

// Mean squared planar positional error over equally long polylines.
double msep(const Polyline& pred, const Polyline& truth);

// Discrete curvature kappa_i = heading change / mean adjacent segment
// length, endpoints pinned to zero. Stationary points (a zero-length
// adjacent segment) get kappa = 0.
std::vector<double> curvature_profile(const Polyline& poly);

// Three-point moving average over interior entries; endpoints stay zero.
std::vector<double> smooth_curvature(const std::vector<double>& profile);

// Mean squared difference of smoothed curvature profiles.
double msec(const Polyline& pred, const Polyline& truth);

// Discrete Frechet distance via the standard O(n*m) dynamic program.
double discrete_frechet(const Polyline& a, const Polyline& b);

// Arithmetic mean of discrete_frechet over a batch of (pred, truth) pairs.
double mfd(const std::vector<std::pair<Polyline, Polyline>>& pairs);

}  // namespace nkpcast::metrics
