#pragma once

// AIS ingestion: header-driven CSV parsing, cargo filtering, 5-minute
// temporal interpolation, key-node NKP annotation, sliding-window
// extraction, feature normalization, and stratified reference sampling.

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "nkpcast/error.hpp"
#include "nkpcast/geo.hpp"

namespace nkpcast::pipeline {

struct AisRecord {
  long long mmsi = 0;
  double timestamp = 0.0;  // epoch seconds, UTC
  geo::GeoPoint pos;
  double sog_knots = 0.0;
  double cog_deg = 0.0;
  int vessel_type = 0;
  std::string track_id;  // optional, empty when absent
};

struct ParseResult {
  std::vector<AisRecord> records;
  std::size_t skipped_rows = 0;
};

// ISO-8601 UTC ("YYYY-MM-DDTHH:MM:SS", 'T' or ' ' separator, optional 'Z')
// to epoch seconds and back.
std::optional<double> parse_iso8601_utc(const std::string& text);
std::string format_iso8601_utc(double epoch_s);

// Header-driven CSV parse. Required columns: MMSI, BaseDateTime, LAT, LON,
// SOG, COG, VesselType; TrackID is honored when present. Malformed rows
// (including positions outside the operational band) are skipped and
// counted. A missing required column is fatal.
ParseResult parse_ais_csv(std::istream& in);

// Keeps cargo ship-type codes 70..79.
std::vector<AisRecord> filter_cargo(const std::vector<AisRecord>& records);

struct TrackSample {
  geo::GeoPoint pos;
  geo::VelocityOverGround vel;
};

struct UniformTrack {
  long long mmsi = 0;
  double t0 = 0.0;
  double dt_s = 300.0;
  std::vector<TrackSample> samples;
};

struct InterpOptions {
  double dt_s = 300.0;
  double max_gap_s = 6.0 * 3600.0;  // larger gaps split the track
};

// Linear interpolation of one vessel's records onto a uniform grid anchored
// at the first timestamp rounded up to a multiple of dt. Velocities are
// recomputed from consecutive interpolated positions, so the one-step
// consistency property holds by construction. Gaps longer than max_gap
// split the stream into separate tracks; segments with fewer than two
// records are dropped. Throws TooFewRecords when no segment survives.
std::vector<UniformTrack> interpolate_uniform(std::vector<AisRecord> records,
                                              const InterpOptions& opts,
                                              const geo::EarthModel& earth);

struct KeyNode {
  std::string id;
  std::string name;
  geo::GeoPoint center;
  double radius_m = 0.0;
};

// Key-node file: JSON array of {id, name, lat, lon, radius_m}.
std::vector<KeyNode> parse_key_nodes_json(const std::string& json_text);
std::vector<KeyNode> load_key_nodes(const std::string& path);

// Half-open sample index range carrying one NKP label.
struct LabeledRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string label;
};

// Geofence annotation: a sample intersects a node when its great-circle
// distance to the center is within the radius. Every maximal gap between
// consecutive intersected nodes is labeled with the LATER node (the next
// anchor); samples after the final intersection stay unlabeled.
std::vector<LabeledRange> annotate_nkp(const UniformTrack& track,
                                       const std::vector<KeyNode>& nodes,
                                       const geo::EarthModel& earth);

struct Window {
  long long mmsi = 0;
  std::size_t start_index = 0;
  double dt_s = 300.0;
  std::vector<TrackSample> samples;        // length exactly l_seq
  std::optional<std::string> label;        // NKP label, when inside a range
  std::optional<geo::GeoPoint> nkp_coords; // the labeled node's center
};

struct WindowOptions {
  std::size_t l_seq = 288;
  std::size_t stride = 12;
};

// Fixed-length windows fully inside a single labeled range inherit that
// range's label and node coordinates. Ranges shorter than l_seq yield
// nothing.
std::vector<Window> slide_windows(const UniformTrack& track,
                                  const std::vector<LabeledRange>& ranges,
                                  const std::vector<KeyNode>& nodes,
                                  const WindowOptions& opts);

// Unlabeled windows over the whole track, for evaluation tasks.
std::vector<Window> slide_windows_unlabeled(const UniformTrack& track,
                                            const WindowOptions& opts);

struct NormalizationSpec {
  double lat_min = -1.0;
  double lat_max = 1.0;
  double lon_min = -1.0;
  double lon_max = 1.0;
  double velocity_scale = 1.0 / 25.0;
  double dt_s = 300.0;  // step length behind the degrees-per-step channels
};

// Row-major feature matrix, one row per time step.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c)
      : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Scalar helpers for the affine coordinate maps.
double norm_lat(double lat_deg, const NormalizationSpec& spec);
double norm_lon(double lon_deg, const NormalizationSpec& spec);
double denorm_lat(double v, const NormalizationSpec& spec);
double denorm_lon(double v, const NormalizationSpec& spec);

// Velocity channels: local degrees-per-step components scaled by
// velocity_scale. The longitude component carries the 1/cos(lat) metric
// factor, so denormalization at the current latitude inverts exactly.
void normalize_velocity(const geo::VelocityOverGround& vel, double lat_deg,
                        const NormalizationSpec& spec,
                        const geo::EarthModel& earth, double& u_lat,
                        double& u_lon);
// Returns the meridional/zonal speed components (a, b) in m/s,
// a = sog*cos(cog), b = sog*sin(cog).
void denormalize_velocity(double u_lat, double u_lon, double lat_deg,
                          const NormalizationSpec& spec,
                          const geo::EarthModel& earth, double& a_mps,
                          double& b_mps);

// L_seq x 4 features (normalized lat, lon, velocity components), or
// L_seq x 6 with the window's NKP coordinates broadcast as constant
// channels 5-6. Throws OutOfBounds when a coordinate leaves the spec.
FeatureMatrix normalize(const Window& window, const NormalizationSpec& spec,
                        const geo::EarthModel& earth);

// Positions (degrees) recovered from the first two feature channels.
std::vector<geo::GeoPoint> denormalize_positions(const FeatureMatrix& features,
                                                 const NormalizationSpec& spec);

// Bounds from a set of windows, expanded by margin_deg on each side.
NormalizationSpec fit_normalization(const std::vector<Window>& windows,
                                    double margin_deg, double dt_s);

// Stratified reference sampling: labels with at least `quota` windows
// contribute exactly `quota` uniformly drawn windows; the rest are dropped.
std::vector<Window> sample_reference_set(const std::vector<Window>& windows,
                                         std::size_t quota,
                                         std::uint64_t seed);

struct MmsiSplit {
  std::vector<long long> train;
  std::vector<long long> val;
  std::vector<long long> test;
};

// Seeded partition of distinct MMSIs; the three sets are disjoint.
MmsiSplit split_by_mmsi(std::vector<long long> mmsis, double train_frac,
                        double val_frac, std::uint64_t seed);

}  // namespace nkpcast::pipeline
