#include "nkpcast/geo.hpp"

#include <cmath>
#include <string>

namespace nkpcast::geo {

namespace {

// ln|sec x + tan x|, the antiderivative of sec. asinh(tan x) is the
// numerically stable form for |x| < pi/2; extended precision keeps the
// difference of nearly equal values usable for near-east-west courses.
long double sec_integral_l(long double x_rad) {
  return std::asinh(std::tan(x_rad));
}

void require_operational(const GeoPoint& p) {
  if (!(std::abs(p.lat_deg) <= kMaxAbsLatDeg)) {
    fail(ErrorCode::InvalidArgument,
         "latitude " + std::to_string(p.lat_deg) + " outside +/-85 deg band");
  }
}

}  // namespace

double sec_integral_diff(double lat0_rad, double lat1_rad) {
  return static_cast<double>(sec_integral_l(lat1_rad) -
                             sec_integral_l(lat0_rad));
}

double wrap_lon_deg(double lon_deg) {
  double w = std::fmod(lon_deg + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  return w - 180.0;
}

double wrap_course_rad(double cog_rad) {
  double w = std::fmod(cog_rad, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w;
}

double haversine_m(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth) {
  const double lat1 = a.lat_deg * kDegToRad;
  const double lat2 = b.lat_deg * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon_deg - a.lon_deg) * kDegToRad;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  return 2.0 * earth.radius_m * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

GeoPoint step(const GeoPoint& p, const VelocityOverGround& vel, double dt_s,
              const EarthModel& earth) {
  if (!(dt_s > 0.0)) {
    fail(ErrorCode::InvalidDt, "dt must be positive, got " + std::to_string(dt_s));
  }
  require_operational(p);
  if (!(vel.sog_mps >= 0.0)) {
    fail(ErrorCode::InvalidArgument, "negative speed over ground");
  }

  const double theta = vel.cog_rad;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double lat0 = p.lat_deg * kDegToRad;

  // Latitude first; the longitude update integrates through lat1. The degree
  // value is built as start + increment so a zero increment is exact (no
  // deg->rad->deg round trip).
  const double dlat = vel.sog_mps * cos_t * dt_s / earth.radius_m;
  const double lat1 = lat0 + dlat;
  const double lat1_deg = p.lat_deg + dlat * kRadToDeg;
  if (std::abs(lat1_deg) > kMaxAbsLatDeg) {
    fail(ErrorCode::PoleProximity,
         "step leaves operational band: lat " + std::to_string(lat1_deg));
  }

  double dlon;
  if (std::abs(cos_t) < kCourseEps) {
    // East-west limit: latitude is stationary to first order.
    dlon = vel.sog_mps * sin_t * dt_s / (earth.radius_m * std::cos(lat0));
  } else {
    dlon = (sin_t / cos_t) * sec_integral_diff(lat0, lat1);
  }

  double lon1 = p.lon_deg + dlon * kRadToDeg;
  if (lon1 < -180.0 || lon1 >= 180.0) lon1 = wrap_lon_deg(lon1);
  return GeoPoint{lat1_deg, lon1};
}

std::vector<GeoPoint> rollout(const GeoPoint& start,
                              const std::vector<VelocityOverGround>& vels,
                              double dt_s, const EarthModel& earth) {
  std::vector<GeoPoint> out;
  out.reserve(vels.size() + 1);
  out.push_back(start);
  for (std::size_t i = 0; i < vels.size(); ++i) {
    try {
      out.push_back(step(out.back(), vels[i], dt_s, earth));
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " (at control index " +
                         std::to_string(i) + ")");
    }
  }
  return out;
}

VelocityOverGround velocity_from_displacement(const GeoPoint& p0,
                                              const GeoPoint& p1, double dt_s,
                                              const EarthModel& earth) {
  if (!(dt_s > 0.0)) {
    fail(ErrorCode::InvalidDt, "dt must be positive");
  }
  require_operational(p0);
  require_operational(p1);

  const double dlat = (p1.lat_deg - p0.lat_deg) * kDegToRad;
  const double dlon = wrap_lon_deg(p1.lon_deg - p0.lon_deg) * kDegToRad;
  if (dlat == 0.0 && dlon == 0.0) {
    return VelocityOverGround{0.0, 0.0};  // convention for zero displacement
  }

  const double lat0 = p0.lat_deg * kDegToRad;
  const double lat1 = p1.lat_deg * kDegToRad;
  const double a = dlat * earth.radius_m / dt_s;  // sog * cos(cog)

  const double big_l = sec_integral_diff(lat0, lat1);
  double b;  // sog * sin(cog)
  if (std::abs(big_l) > 1e-12) {
    b = a * dlon / big_l;
  } else {
    b = dlon * earth.radius_m * std::cos(lat0) / dt_s;
  }

  return VelocityOverGround{std::hypot(a, b), wrap_course_rad(std::atan2(b, a))};
}

double one_step_consistency(const std::vector<GeoPoint>& points,
                            const std::vector<VelocityOverGround>& vels,
                            double dt_s, const EarthModel& earth) {
  if (points.size() < 2) {
    fail(ErrorCode::TooShort, "need at least 2 samples for consistency check");
  }
  if (vels.size() + 1 < points.size()) {
    fail(ErrorCode::LengthMismatch, "fewer velocities than transitions");
  }
  double acc = 0.0;
  const std::size_t n = points.size() - 1;
  for (std::size_t t = 0; t < n; ++t) {
    const GeoPoint pred = step(points[t], vels[t], dt_s, earth);
    const double dlat = pred.lat_deg - points[t + 1].lat_deg;
    const double dlon = wrap_lon_deg(pred.lon_deg - points[t + 1].lon_deg);
    acc += dlat * dlat + dlon * dlon;
  }
  return acc / static_cast<double>(n);
}

StepJacobian step_with_jacobian(const GeoPoint& p, double a_mps, double b_mps,
                                double dt_s, const EarthModel& earth) {
  if (!(dt_s > 0.0)) {
    fail(ErrorCode::InvalidDt, "dt must be positive");
  }
  require_operational(p);

  const double lat0 = p.lat_deg * kDegToRad;
  const double r = earth.radius_m;
  const double v = std::hypot(a_mps, b_mps);
  const double lat1 = lat0 + a_mps * dt_s / r;
  const double lat1_deg = p.lat_deg + (a_mps * dt_s / r) * kRadToDeg;
  if (std::abs(lat1_deg) > kMaxAbsLatDeg) {
    fail(ErrorCode::PoleProximity, "step leaves operational band");
  }

  StepJacobian j;
  j.p1.lat_deg = lat1_deg;
  j.dlat_da = (dt_s / r) * kRadToDeg;
  j.dlat_db = 0.0;

  double dlon;
  if (v == 0.0 || std::abs(a_mps) < kCourseEps * v) {
    const double k = dt_s / (r * std::cos(lat0));
    dlon = b_mps * k;
    j.dlon_da = 0.0;
    j.dlon_db = k * kRadToDeg;
  } else {
    const double big_l = sec_integral_diff(lat0, lat1);
    dlon = (b_mps / a_mps) * big_l;
    j.dlon_db = (big_l / a_mps) * kRadToDeg;
    j.dlon_da = (-(b_mps / (a_mps * a_mps)) * big_l +
                 (b_mps / a_mps) * (dt_s / r) / std::cos(lat1)) *
                kRadToDeg;
  }
  double lon1 = p.lon_deg + dlon * kRadToDeg;
  if (lon1 < -180.0 || lon1 >= 180.0) lon1 = wrap_lon_deg(lon1);
  j.p1.lon_deg = lon1;
  return j;
}

}  // namespace nkpcast::geo
