#include "nkpcast/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

namespace nkpcast::pipeline {

namespace {

// Howard Hinnant's civil-date algorithms.
long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

void civil_from_days(long long z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long yy = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    return pos == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

bool parse_ll(const std::string& s, long long& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Seeded Fisher-Yates; std::shuffle's sequence is implementation-defined,
// this one is pinned.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::optional<double> parse_iso8601_utc(const std::string& text) {
  int y, mo, d, h, mi;
  double s;
  char sep;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h,
                  &mi, &s) != 7) {
    return std::nullopt;
  }
  if (sep != 'T' && sep != ' ') return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 ||
      mi > 59 || s < 0.0 || s >= 61.0) {
    return std::nullopt;
  }
  const long long days = days_from_civil(y, mo, d);
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + s;
}

std::string format_iso8601_utc(double epoch_s) {
  const long long total = static_cast<long long>(std::floor(epoch_s));
  long long days = total / 86400;
  long long sod = total % 86400;
  if (sod < 0) {
    sod += 86400;
    --days;
  }
  int y;
  unsigned mo, d;
  civil_from_days(days, y, mo, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo,
                d, sod / 3600, (sod / 60) % 60, sod % 60);
  return buf;
}

ParseResult parse_ais_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::MissingColumn, "empty input, no header row");
  }
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    col[to_lower(header[i])] = i;
  }
  const char* required[] = {"mmsi", "basedatetime", "lat",
                            "lon",  "sog",          "cog",
                            "vesseltype"};
  for (const char* name : required) {
    if (!col.count(name)) {
      fail(ErrorCode::MissingColumn, std::string("missing column: ") + name);
    }
  }
  const bool has_track = col.count("trackid") > 0;

  ParseResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    auto get = [&](const char* name) -> const std::string& {
      static const std::string empty;
      const std::size_t i = col.at(name);
      return i < fields.size() ? fields[i] : empty;
    };

    AisRecord rec;
    double lat, lon, sog, cog;
    const auto ts = parse_iso8601_utc(get("basedatetime"));
    long long vt;
    const bool ok = parse_ll(get("mmsi"), rec.mmsi) && ts.has_value() &&
                    parse_double(get("lat"), lat) &&
                    parse_double(get("lon"), lon) &&
                    parse_double(get("sog"), sog) &&
                    parse_double(get("cog"), cog) &&
                    parse_ll(get("vesseltype"), vt) &&
                    std::abs(lat) <= geo::kMaxAbsLatDeg && sog >= 0.0;
    if (!ok) {
      ++result.skipped_rows;
      continue;
    }
    rec.timestamp = *ts;
    rec.pos = geo::GeoPoint{lat, geo::wrap_lon_deg(lon)};
    rec.sog_knots = sog;
    rec.cog_deg = cog - 360.0 * std::floor(cog / 360.0);
    rec.vessel_type = static_cast<int>(vt);
    if (has_track) rec.track_id = get("trackid");
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::vector<AisRecord> filter_cargo(const std::vector<AisRecord>& records) {
  std::vector<AisRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.vessel_type >= 70 && r.vessel_type <= 79) out.push_back(r);
  }
  return out;
}

std::vector<UniformTrack> interpolate_uniform(std::vector<AisRecord> records,
                                              const InterpOptions& opts,
                                              const geo::EarthModel& earth) {
  if (records.size() < 2) {
    fail(ErrorCode::TooShort, "interpolate_uniform: fewer than 2 records");
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const AisRecord& a, const AisRecord& b) {
                     return a.timestamp < b.timestamp;
                   });

  // Split into segments at gaps wider than max_gap.
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t seg_begin = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp - records[i - 1].timestamp > opts.max_gap_s) {
      segments.emplace_back(seg_begin, i);
      seg_begin = i;
    }
  }
  segments.emplace_back(seg_begin, records.size());

  std::vector<UniformTrack> tracks;
  for (const auto& [lo, hi] : segments) {
    if (hi - lo < 2) continue;
    const double t_first = records[lo].timestamp;
    const double t_last = records[hi - 1].timestamp;
    const double t0 = std::ceil(t_first / opts.dt_s) * opts.dt_s;
    const std::size_t n_grid =
        t_last < t0 ? 0
                    : static_cast<std::size_t>(
                          std::floor((t_last - t0) / opts.dt_s)) +
                          1;
    if (n_grid < 2) continue;

    UniformTrack track;
    track.mmsi = records[lo].mmsi;
    track.t0 = t0;
    track.dt_s = opts.dt_s;
    track.samples.resize(n_grid);

    std::size_t cursor = lo;
    for (std::size_t k = 0; k < n_grid; ++k) {
      const double t = t0 + static_cast<double>(k) * opts.dt_s;
      while (cursor + 1 < hi && records[cursor + 1].timestamp <= t) ++cursor;
      const AisRecord& a = records[cursor];
      const AisRecord& b = records[std::min(cursor + 1, hi - 1)];
      double w = 0.0;
      if (b.timestamp > a.timestamp) {
        w = (t - a.timestamp) / (b.timestamp - a.timestamp);
      }
      track.samples[k].pos.lat_deg =
          a.pos.lat_deg + w * (b.pos.lat_deg - a.pos.lat_deg);
      track.samples[k].pos.lon_deg = geo::wrap_lon_deg(
          a.pos.lon_deg + w * (b.pos.lon_deg - a.pos.lon_deg));
    }
    for (std::size_t k = 0; k + 1 < n_grid; ++k) {
      track.samples[k].vel = geo::velocity_from_displacement(
          track.samples[k].pos, track.samples[k + 1].pos, opts.dt_s, earth);
    }
    track.samples[n_grid - 1].vel = track.samples[n_grid - 2].vel;
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<KeyNode> parse_key_nodes_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("key nodes: ") + e.what());
  }
  if (!j.is_array()) {
    fail(ErrorCode::InvalidConfig, "key nodes: expected a JSON array");
  }
  std::vector<KeyNode> nodes;
  for (const auto& item : j) {
    KeyNode node;
    node.id = item.at("id").get<std::string>();
    node.name = item.value("name", node.id);
    node.center.lat_deg = item.at("lat").get<double>();
    node.center.lon_deg = item.at("lon").get<double>();
    node.radius_m = item.at("radius_m").get<double>();
    if (!(node.radius_m > 0.0)) {
      fail(ErrorCode::InvalidConfig, "key node " + node.id + ": radius <= 0");
    }
    nodes.push_back(std::move(node));
  }
  return nodes;
}

std::vector<KeyNode> load_key_nodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::IoError, "cannot open key node file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_nodes_json(ss.str());
}

std::vector<LabeledRange> annotate_nkp(const UniformTrack& track,
                                       const std::vector<KeyNode>& nodes,
                                       const geo::EarthModel& earth) {
  if (nodes.empty()) {
    fail(ErrorCode::InvalidArgument, "annotate_nkp: no key nodes");
  }
  const std::size_t n = track.samples.size();
  // Node index per sample, -1 outside every geofence; nearest wins on
  // overlap.
  std::vector<int> hit(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double d =
          geo::haversine_m(track.samples[i].pos, nodes[k].center, earth);
      if (d <= nodes[k].radius_m && (hit[i] < 0 || d < best)) {
        hit[i] = static_cast<int>(k);
        best = d;
      }
    }
  }

  std::vector<LabeledRange> ranges;
  std::ptrdiff_t last_hit = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (hit[i] < 0) continue;
    if (last_hit >= 0 && static_cast<std::size_t>(last_hit) + 1 < i) {
      ranges.push_back(LabeledRange{static_cast<std::size_t>(last_hit) + 1, i,
                                    nodes[hit[i]].id});
    }
    last_hit = static_cast<std::ptrdiff_t>(i);
  }
  return ranges;
}

namespace {

std::optional<geo::GeoPoint> node_center(const std::vector<KeyNode>& nodes,
                                         const std::string& id) {
  for (const auto& node : nodes) {
    if (node.id == id) return node.center;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Window> slide_windows(const UniformTrack& track,
                                  const std::vector<LabeledRange>& ranges,
                                  const std::vector<KeyNode>& nodes,
                                  const WindowOptions& opts) {
  if (opts.l_seq < 2 || opts.stride < 1) {
    fail(ErrorCode::InvalidArgument, "slide_windows: l_seq >= 2, stride >= 1");
  }
  std::vector<Window> windows;
  for (const auto& range : ranges) {
    const std::size_t len = range.end - range.begin;
    if (len < opts.l_seq) continue;
    const auto coords = node_center(nodes, range.label);
    const std::size_t count = (len - opts.l_seq) / opts.stride + 1;
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = range.begin + w * opts.stride;
      Window window;
      window.mmsi = track.mmsi;
      window.start_index = start;
      window.dt_s = track.dt_s;
      window.samples.assign(track.samples.begin() + start,
                            track.samples.begin() + start + opts.l_seq);
      window.label = range.label;
      window.nkp_coords = coords;
      windows.push_back(std::move(window));
    }
  }
  return windows;
}

std::vector<Window> slide_windows_unlabeled(const UniformTrack& track,
                                            const WindowOptions& opts) {
  if (opts.l_seq < 2 || opts.stride < 1) {
    fail(ErrorCode::InvalidArgument, "slide_windows: l_seq >= 2, stride >= 1");
  }
  std::vector<Window> windows;
  if (track.samples.size() < opts.l_seq) return windows;
  const std::size_t count = (track.samples.size() - opts.l_seq) / opts.stride + 1;
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * opts.stride;
    Window window;
    window.mmsi = track.mmsi;
    window.start_index = start;
    window.dt_s = track.dt_s;
    window.samples.assign(track.samples.begin() + start,
                          track.samples.begin() + start + opts.l_seq);
    windows.push_back(std::move(window));
  }
  return windows;
}

double norm_lat(double lat_deg, const NormalizationSpec& spec) {
  return -1.0 + 2.0 * (lat_deg - spec.lat_min) / (spec.lat_max - spec.lat_min);
}

double norm_lon(double lon_deg, const NormalizationSpec& spec) {
  return -1.0 + 2.0 * (lon_deg - spec.lon_min) / (spec.lon_max - spec.lon_min);
}

double denorm_lat(double v, const NormalizationSpec& spec) {
  return spec.lat_min + 0.5 * (v + 1.0) * (spec.lat_max - spec.lat_min);
}

double denorm_lon(double v, const NormalizationSpec& spec) {
  return spec.lon_min + 0.5 * (v + 1.0) * (spec.lon_max - spec.lon_min);
}

void normalize_velocity(const geo::VelocityOverGround& vel, double lat_deg,
                        const NormalizationSpec& spec,
                        const geo::EarthModel& earth, double& u_lat,
                        double& u_lon) {
  const double a = vel.sog_mps * std::cos(vel.cog_rad);
  const double b = vel.sog_mps * std::sin(vel.cog_rad);
  const double lat = lat_deg * geo::kDegToRad;
  u_lat = a * spec.dt_s / earth.radius_m * geo::kRadToDeg * spec.velocity_scale;
  u_lon = b * spec.dt_s / (earth.radius_m * std::cos(lat)) * geo::kRadToDeg *
          spec.velocity_scale;
}

void denormalize_velocity(double u_lat, double u_lon, double lat_deg,
                          const NormalizationSpec& spec,
                          const geo::EarthModel& earth, double& a_mps,
                          double& b_mps) {
  const double lat = lat_deg * geo::kDegToRad;
  a_mps = u_lat / spec.velocity_scale * geo::kDegToRad * earth.radius_m /
          spec.dt_s;
  b_mps = u_lon / spec.velocity_scale * geo::kDegToRad * earth.radius_m *
          std::cos(lat) / spec.dt_s;
}

namespace {

double checked_norm(double value, double lo, double hi, const char* what) {
  if (value < lo || value > hi) {
    fail(ErrorCode::OutOfBounds, std::string(what) + " " +
                                     std::to_string(value) +
                                     " outside normalization bounds [" +
                                     std::to_string(lo) + ", " +
                                     std::to_string(hi) + "]");
  }
  return -1.0 + 2.0 * (value - lo) / (hi - lo);
}

}  // namespace

FeatureMatrix normalize(const Window& window, const NormalizationSpec& spec,
                        const geo::EarthModel& earth) {
  const bool with_nkp = window.nkp_coords.has_value();
  FeatureMatrix out(window.samples.size(), with_nkp ? 6 : 4);
  double nkp_lat = 0.0, nkp_lon = 0.0;
  if (with_nkp) {
    nkp_lat = checked_norm(window.nkp_coords->lat_deg, spec.lat_min,
                           spec.lat_max, "nkp lat");
    nkp_lon = checked_norm(window.nkp_coords->lon_deg, spec.lon_min,
                           spec.lon_max, "nkp lon");
  }
  for (std::size_t t = 0; t < window.samples.size(); ++t) {
    const auto& s = window.samples[t];
    out.at(t, 0) =
        checked_norm(s.pos.lat_deg, spec.lat_min, spec.lat_max, "lat");
    out.at(t, 1) =
        checked_norm(s.pos.lon_deg, spec.lon_min, spec.lon_max, "lon");
    normalize_velocity(s.vel, s.pos.lat_deg, spec, earth, out.at(t, 2),
                       out.at(t, 3));
    if (with_nkp) {
      out.at(t, 4) = nkp_lat;
      out.at(t, 5) = nkp_lon;
    }
  }
  return out;
}

std::vector<geo::GeoPoint> denormalize_positions(const FeatureMatrix& features,
                                                 const NormalizationSpec& spec) {
  if (features.cols < 2) {
    fail(ErrorCode::ShapeMismatch, "denormalize: need at least 2 channels");
  }
  std::vector<geo::GeoPoint> out(features.rows);
  for (std::size_t t = 0; t < features.rows; ++t) {
    out[t].lat_deg = denorm_lat(features.at(t, 0), spec);
    out[t].lon_deg = denorm_lon(features.at(t, 1), spec);
  }
  return out;
}

NormalizationSpec fit_normalization(const std::vector<Window>& windows,
                                    double margin_deg, double dt_s) {
  if (windows.empty()) {
    fail(ErrorCode::EmptyInput, "fit_normalization: no windows");
  }
  NormalizationSpec spec;
  spec.dt_s = dt_s;
  spec.lat_min = spec.lon_min = 1e300;
  spec.lat_max = spec.lon_max = -1e300;
  auto grow = [&](const geo::GeoPoint& p) {
    spec.lat_min = std::min(spec.lat_min, p.lat_deg);
    spec.lat_max = std::max(spec.lat_max, p.lat_deg);
    spec.lon_min = std::min(spec.lon_min, p.lon_deg);
    spec.lon_max = std::max(spec.lon_max, p.lon_deg);
  };
  for (const auto& w : windows) {
    for (const auto& s : w.samples) grow(s.pos);
    if (w.nkp_coords) grow(*w.nkp_coords);
  }
  spec.lat_min -= margin_deg;
  spec.lat_max += margin_deg;
  spec.lon_min -= margin_deg;
  spec.lon_max += margin_deg;
  return spec;
}

std::vector<Window> sample_reference_set(const std::vector<Window>& windows,
                                         std::size_t quota,
                                         std::uint64_t seed) {
  if (quota < 1) {
    fail(ErrorCode::InvalidArgument, "sample_reference_set: quota >= 1");
  }
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].label) by_label[*windows[i].label].push_back(i);
  }
  std::vector<Window> out;
  for (auto& [label, indices] : by_label) {
    if (indices.size() < quota) continue;  // under-represented labels dropped
    std::mt19937_64 rng(seed ^ fnv1a(label));
    deterministic_shuffle(indices, rng);
    indices.resize(quota);
    std::sort(indices.begin(), indices.end());
    for (std::size_t i : indices) out.push_back(windows[i]);
  }
  return out;
}

MmsiSplit split_by_mmsi(std::vector<long long> mmsis, double train_frac,
                        double val_frac, std::uint64_t seed) {
  std::sort(mmsis.begin(), mmsis.end());
  mmsis.erase(std::unique(mmsis.begin(), mmsis.end()), mmsis.end());
  std::mt19937_64 rng(seed);
  deterministic_shuffle(mmsis, rng);
  const std::size_t n = mmsis.size();
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_frac * static_cast<double>(n)));
  MmsiSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      split.train.push_back(mmsis[i]);
    } else if (i < n_train + n_val) {
      split.val.push_back(mmsis[i]);
    } else {
      split.test.push_back(mmsis[i]);
    }
  }
  return split;
}

}  // namespace nkpcast::pipeline
