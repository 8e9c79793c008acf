#include "nkpcast/geojson.hpp"

#include <json.hpp>

namespace nkpcast::geojson {

std::string emit_geojson(const std::vector<PolylineFeature>& features) {
  nlohmann::json collection = {
      {"type", "FeatureCollection"},
      {"features", nlohmann::json::array()},
  };
  for (const auto& f : features) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : f.points) {
      coords.push_back({p.lon_deg, p.lat_deg});
    }
    collection["features"].push_back({
        {"type", "Feature"},
        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
        {"properties",
         {{"role", f.role},
          {"model", f.model},
          {"mmsi", f.mmsi},
          {"seed", f.seed}}},
    });
  }
  return collection.dump(2) + "\n";
}

}  // namespace nkpcast::geojson
