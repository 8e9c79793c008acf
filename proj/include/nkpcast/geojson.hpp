#pragma once

// RFC 7946 FeatureCollection export of trajectory polylines, one LineString
// feature per polyline with role/model/mmsi/seed properties. Coordinates
// are ordered (lon, lat).

#include <string>
#include <vector>

#include "nkpcast/metrics.hpp"

namespace nkpcast::geojson {

struct PolylineFeature {
  metrics::Polyline points;
  std::string role;   // history | truth | prediction | baseline
  std::string model;  // ours | cvm | ...
  long long mmsi = 0;
  std::uint64_t seed = 0;
};

std::string emit_geojson(const std::vector<PolylineFeature>& features);

}  // namespace nkpcast::geojson
