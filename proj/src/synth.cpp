#include "nkpcast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <queue>
#include <random>
#include <set>

#include <json.hpp>

namespace nkpcast::synth {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

double wrap_pi(double x) {
  const double two_pi = 2.0 * geo::kPi;
  double w = std::fmod(x, two_pi);
  if (w <= -geo::kPi) w += two_pi;
  if (w > geo::kPi) w -= two_pi;
  return w;
}

void validate(const SynthConfig& config) {
  if (config.n_vessels < 0 || config.nodes.empty()) {
    fail(ErrorCode::InvalidConfig, "synth: need nodes and n_vessels >= 0");
  }
  if (config.speed_min_mps < 2.0 || config.speed_max_mps > 15.0 ||
      config.speed_min_mps > config.speed_max_mps) {
    fail(ErrorCode::InvalidConfig, "synth: speeds must lie within [2, 15] m/s");
  }
  if (config.emit_min_s <= 0.0 || config.emit_max_s < config.emit_min_s ||
      config.sim_dt_s <= 0.0) {
    fail(ErrorCode::InvalidConfig, "synth: bad emission or sim intervals");
  }
  if (config.route_legs < 1) {
    fail(ErrorCode::InvalidConfig, "synth: route_legs >= 1");
  }

  std::set<std::string> ids;
  for (const auto& node : config.nodes) ids.insert(node.id);
  if (ids.size() != config.nodes.size()) {
    fail(ErrorCode::InvalidConfig, "synth: duplicate node ids");
  }
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [u, v] : config.edges) {
    if (!ids.count(u) || !ids.count(v)) {
      fail(ErrorCode::InvalidConfig, "synth: edge references unknown node");
    }
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  // Connectivity over the undirected graph.
  if (config.nodes.size() > 1) {
    std::set<std::string> seen{config.nodes.front().id};
    std::queue<std::string> frontier;
    frontier.push(config.nodes.front().id);
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      for (const auto& v : adj[u]) {
        if (seen.insert(v).second) frontier.push(v);
      }
    }
    if (seen.size() != config.nodes.size()) {
      fail(ErrorCode::InvalidConfig, "synth: route graph is not connected");
    }
  }
  for (const auto& route : config.fixed_routes) {
    if (route.size() < 2) {
      fail(ErrorCode::InvalidConfig, "synth: fixed route needs >= 2 nodes");
    }
    for (const auto& id : route) {
      if (!ids.count(id)) {
        fail(ErrorCode::InvalidConfig, "synth: fixed route references unknown node");
      }
    }
  }
}

}  // namespace

SynthConfig parse_synth_config_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  SynthConfig config;
  config.nodes = pipeline::parse_key_nodes_json(j.at("nodes").dump());
  for (const auto& edge : j.at("edges")) {
    config.edges.emplace_back(edge.at(0).get<std::string>(),
                              edge.at(1).get<std::string>());
  }
  config.n_vessels = j.at("n_vessels").get<int>();
  config.sigma_pos_deg = j.value("sigma_pos_deg", 0.0);
  config.speed_min_mps = j.value("speed_min_mps", 4.0);
  config.speed_max_mps = j.value("speed_max_mps", 8.0);
  config.emit_min_s = j.value("emit_min_s", 60.0);
  config.emit_max_s = j.value("emit_max_s", 600.0);
  config.route_legs = j.value("route_legs", 2);
  config.sim_dt_s = j.value("sim_dt_s", 60.0);
  config.turn_rate_rad_s = j.value("turn_rate_rad_s", 0.003);
  config.mmsi_base = j.value("mmsi_base", 200000000LL);
  config.seed = j.value("seed", 0ULL);
  if (j.contains("fixed_routes")) {
    for (const auto& route : j.at("fixed_routes")) {
      config.fixed_routes.push_back(route.get<std::vector<std::string>>());
    }
  }
  return config;
}

SynthResult synth_fleet(const SynthConfig& config,
                        const geo::EarthModel& earth) {
  validate(config);

  std::map<std::string, const pipeline::KeyNode*> by_id;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& node : config.nodes) by_id[node.id] = &node;
  for (const auto& [u, v] : config.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }

  SynthResult result;
  for (int vi = 0; vi < config.n_vessels; ++vi) {
    std::mt19937_64 rng(mix(config.seed, static_cast<std::uint64_t>(vi)));

    // Route: either a fixed node sequence or a random non-backtracking walk.
    std::vector<std::string> route;
    if (!config.fixed_routes.empty()) {
      route = config.fixed_routes[static_cast<std::size_t>(vi) %
                                  config.fixed_routes.size()];
    } else {
      std::uniform_int_distribution<std::size_t> pick_start(
          0, config.nodes.size() - 1);
      route.push_back(config.nodes[pick_start(rng)].id);
      for (int leg = 0; leg < config.route_legs; ++leg) {
        const auto& options = adj[route.back()];
        if (options.empty()) break;
        std::vector<std::string> forward;
        for (const auto& o : options) {
          if (route.size() < 2 || o != route[route.size() - 2]) {
            forward.push_back(o);
          }
        }
        const auto& pool = forward.empty() ? options : forward;
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        route.push_back(pool[pick(rng)]);
      }
      if (route.size() < 2) continue;  // isolated node, nothing to sail
    }

    std::uniform_real_distribution<double> pick_speed(config.speed_min_mps,
                                                      config.speed_max_mps);
    const double speed = pick_speed(rng);

    const long long emit_lo = std::max<long long>(
        1, static_cast<long long>(std::ceil(config.emit_min_s / config.sim_dt_s)));
    const long long emit_hi = std::max(
        emit_lo,
        static_cast<long long>(std::floor(config.emit_max_s / config.sim_dt_s)));
    std::uniform_int_distribution<long long> pick_interval(emit_lo, emit_hi);
    std::normal_distribution<double> jitter(0.0, 1.0);

    geo::GeoPoint pos = by_id.at(route.front())->center;
    double t = static_cast<double>(vi) * 86400.0;
    double next_emit = t;
    double course = geo::velocity_from_displacement(
                        pos, by_id.at(route[1])->center, 600.0, earth)
                        .cog_rad;

    const long long mmsi = config.mmsi_base + vi;
    const long long max_steps = 200000;
    std::size_t target_idx = 1;
    for (long long step_i = 0; step_i < max_steps && target_idx < route.size();
         ++step_i) {
      const auto& target = *by_id.at(route[target_idx]);

      if (t >= next_emit) {
        pipeline::AisRecord rec;
        rec.mmsi = mmsi;
        rec.timestamp = t;
        rec.pos.lat_deg = pos.lat_deg + config.sigma_pos_deg * jitter(rng);
        rec.pos.lon_deg =
            geo::wrap_lon_deg(pos.lon_deg + config.sigma_pos_deg * jitter(rng));
        rec.sog_knots = speed / geo::kKnotsToMps;
        rec.cog_deg = geo::wrap_course_rad(course) * geo::kRadToDeg;
        rec.vessel_type = 70;
        result.records.push_back(rec);
        result.truth_labels.push_back(target.id);
        next_emit = t + static_cast<double>(pick_interval(rng)) * config.sim_dt_s;
      }

      // Rate-limited turn toward the current target, then one rhumb step.
      const double desired =
          geo::velocity_from_displacement(pos, target.center, 600.0, earth)
              .cog_rad;
      const double max_turn = config.turn_rate_rad_s * config.sim_dt_s;
      course = geo::wrap_course_rad(
          course + std::clamp(wrap_pi(desired - course), -max_turn, max_turn));
      pos = geo::step(pos, geo::VelocityOverGround{speed, course},
                      config.sim_dt_s, earth);
      t += config.sim_dt_s;

      if (geo::haversine_m(pos, target.center, earth) <= target.radius_m) {
        ++target_idx;
      }
    }
  }
  return result;
}

std::string to_csv(const SynthResult& result) {
  std::string out = "MMSI,BaseDateTime,LAT,LON,SOG,COG,VesselType,TruthNkp\n";
  char buf[256];
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.10f,%.10f,%.7f,%.7f,%d,%s\n",
                  r.mmsi, pipeline::format_iso8601_utc(r.timestamp).c_str(),
                  r.pos.lat_deg, r.pos.lon_deg, r.sog_knots, r.cog_deg,
                  r.vessel_type, result.truth_labels[i].c_str());
    out += buf;
  }
  return out;
}

}  // namespace nkpcast::synth
