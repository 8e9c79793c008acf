#pragma once

// End-to-end run harness behind the CLI: configuration loading, dataset
// assembly from AIS CSV + key nodes, the training/eval/verify subcommands,
// and deterministic JSON/CSV reporting. Every report embeds the config
// hash and the seeds in effect.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nkpcast/encoder.hpp"
#include "nkpcast/predictor.hpp"
#include "nkpcast/synth.hpp"

namespace nkpcast::harness {

struct RunConfig {
  // Paths. Artifact paths default to files under out_dir.
  std::string data_csv;
  std::string key_nodes;
  std::string out_dir = ".";
  std::string encoder_ckpt;
  std::string refdb_ckpt;
  std::string predictor_ckpt;    // 6-channel model
  std::string predictor4_ckpt;   // 4-channel ablation model
  std::string norm_json;

  // Pipeline.
  double dt_s = 300.0;
  double max_gap_s = 6.0 * 3600.0;
  std::size_t l_seq = 288;
  std::size_t stride = 12;
  std::size_t quota = 50;
  double margin_deg = 0.5;
  bool cargo_only = true;

  // MMSI split.
  double train_frac = 0.7;
  double val_frac = 0.1;
  std::uint64_t split_seed = 0;

  // Encoder / retrieval.
  std::size_t enc_hidden = 128;
  std::size_t enc_emb = 64;
  nkp::ContrastiveConfig contrastive;
  double tau = 0.5;

  // Predictor.
  std::size_t context = 16;
  std::size_t pred_hidden = 128;
  std::size_t channels = 6;
  motion::TrainSchedule schedule;
  std::size_t max_train_windows = 0;  // 0 = all

  // Prediction tasks.
  std::size_t history_len = 32;
  std::size_t horizon = 32;
  std::size_t max_tasks = 50;
  std::string nkp_mode = "predicted";  // predicted | oracle | wrong
  std::string model = "ours";          // ours | cvm
  std::uint64_t seed = 0;
  bool fixed_clock = false;

  // Invariant sweeps.
  std::size_t info_instances = 1000;

  std::optional<synth::SynthConfig> synth;

  // Verbatim config file text; the config hash is FNV-1a over this.
  std::string raw_json;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

std::uint64_t config_hash(const RunConfig& config);

struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> channels;
  std::optional<std::string> nkp_mode;
  std::optional<std::string> model;
  bool fixed_clock = false;
};

// Dispatches a subcommand; prints the JSON report to `out` and a
// machine-readable error report to `err` on failure. Returns 0 on success
// or the ErrorCode value otherwise.
int run(const CliOptions& options, std::ostream& out, std::ostream& err);

// Subcommand entry points. Each returns the JSON report it also writes
// under out_dir. Exposed directly for tests.
std::string run_synth(const RunConfig& config);
std::string run_ingest(const RunConfig& config);
std::string run_train_encoder(const RunConfig& config);
std::string run_build_db(const RunConfig& config);
std::string run_train_predictor(const RunConfig& config);
std::string run_predict(const RunConfig& config);
std::string run_evaluate(const RunConfig& config);
std::string run_ablate(const RunConfig& config);
std::string run_info_check(const RunConfig& config);
std::string run_verify(const RunConfig& config);

// Evaluation parallelism cap from HELM_SKETCH_THREADS (>= 1).
std::size_t eval_threads();

}  // namespace nkpcast::harness
