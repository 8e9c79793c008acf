#pragma once

// Seeded synthetic AIS fleet over a route graph of key nodes; vessels
// follow rhumb-line legs with rate-limited course changes and emit records
// at irregular intervals. Used as the oracle data source for pipeline,
// retrieval, and prediction tests.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nkpcast/pipeline.hpp"

namespace nkpcast::synth {

struct SynthConfig {
  std::vector<pipeline::KeyNode> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // undirected
  int n_vessels = 0;
  double sigma_pos_deg = 0.0;
  double speed_min_mps = 4.0;
  double speed_max_mps = 8.0;
  double emit_min_s = 60.0;
  double emit_max_s = 600.0;
  int route_legs = 2;           // node-to-node legs per vessel
  double sim_dt_s = 60.0;       // internal integration step
  double turn_rate_rad_s = 0.003;
  long long mmsi_base = 200000000;
  std::uint64_t seed = 0;
  // Optional per-vessel fixed routes (node id sequences); when nonempty,
  // vessel i follows fixed_routes[i % size] instead of a random walk.
  std::vector<std::vector<std::string>> fixed_routes;
};

struct SynthResult {
  std::vector<pipeline::AisRecord> records;
  // Ground-truth NKP (the node the vessel is currently heading to) per
  // record, for evaluation against annotate_nkp.
  std::vector<std::string> truth_labels;
};

SynthConfig parse_synth_config_json(const std::string& json_text);

SynthResult synth_fleet(const SynthConfig& config,
                        const geo::EarthModel& earth);

// Records serialized to the AIS CSV schema understood by parse_ais_csv,
// with ground truth in a trailing TruthNkp column (ignored by the parser's
// required set).
std::string to_csv(const SynthResult& result);

}  // namespace nkpcast::synth
