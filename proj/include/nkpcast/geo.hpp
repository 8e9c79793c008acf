#pragma once

// Rhumb-line dead reckoning on a spherical Earth: closed-form coordinate
// stepping from SOG/COG, multi-step rollout, the inverse displacement ->
// velocity map, and the one-step consistency residual.

#include <cstddef>
#include <vector>

#include "nkpcast/error.hpp"

namespace nkpcast::geo {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;
inline constexpr double kKnotsToMps = 0.514444;

// Operational latitude band; sec/tan diverge toward the poles.
inline constexpr double kMaxAbsLatDeg = 85.0;

// Below this |cos(course)| the longitude update switches to its
// analytic east-west limit; the general formula loses precision as
// tan(theta) * log-ratio approaches 0 * inf.
inline constexpr double kCourseEps = 1e-6;

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

struct VelocityOverGround {
  double sog_mps = 0.0;   // speed over ground, m/s, >= 0
  double cog_rad = 0.0;   // course over ground, [0, 2*pi), 0 = north, cw
};

struct EarthModel {
  double radius_m = 6371000.0;
};

// asinh(tan(lat1)) - asinh(tan(lat0)), the meridian-stretch factor of the
// longitude update, evaluated in extended precision (the plain double
// difference cancels catastrophically for near-east-west courses).
double sec_integral_diff(double lat0_rad, double lat1_rad);

// Wraps a longitude into [-180, 180).
double wrap_lon_deg(double lon_deg);

// Wraps a course angle into [0, 2*pi).
double wrap_course_rad(double cog_rad);

// Great-circle (haversine) distance in meters.
double haversine_m(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth);

// One closed-form rhumb-line step of duration dt_s.
// Throws InvalidDt when dt_s <= 0 and PoleProximity when the step leaves
// the operational latitude band.
GeoPoint step(const GeoPoint& p, const VelocityOverGround& vel, double dt_s,
              const EarthModel& earth);

// Start point followed by one stepped point per control. Errors from step
// are rethrown with the failing control index in the message.
std::vector<GeoPoint> rollout(const GeoPoint& start,
                              const std::vector<VelocityOverGround>& vels,
                              double dt_s, const EarthModel& earth);

// Inverse of step: the (sog, cog) whose rhumb-line step of duration dt_s
// maps p0 onto p1. Coincident points return (0, 0).
VelocityOverGround velocity_from_displacement(const GeoPoint& p0,
                                              const GeoPoint& p1, double dt_s,
                                              const EarthModel& earth);

// Mean squared one-step residual, in squared degrees, of stepping each
// sample with its recorded velocity against the recorded next sample.
// Requires at least two samples.
double one_step_consistency(const std::vector<GeoPoint>& points,
                            const std::vector<VelocityOverGround>& vels,
                            double dt_s, const EarthModel& earth);

// Jacobian of one step with respect to the velocity components
// (a, b) = (sog*cos(cog), sog*sin(cog)), in output degrees per m/s.
// Used by the behavior-cloning loss gradient.
struct StepJacobian {
  GeoPoint p1;
  double dlat_da = 0.0;
  double dlat_db = 0.0;
  double dlon_da = 0.0;
  double dlon_db = 0.0;
};

StepJacobian step_with_jacobian(const GeoPoint& p, double a_mps, double b_mps,
                                double dt_s, const EarthModel& earth);

}  // namespace nkpcast::geo
