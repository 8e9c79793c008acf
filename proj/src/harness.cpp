#include "nkpcast/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nkpcast/checkpoint.hpp"
#include "nkpcast/geojson.hpp"
#include "nkpcast/info_checks.hpp"
#include "nkpcast/metrics.hpp"

namespace nkpcast::harness {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t h = seed ^ (salt + 0x9e3779b97f4a7c15ull + (seed << 6) +
                            (seed >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Common report envelope: config hash and seeds in every artifact.
json envelope(const RunConfig& config, const std::string& subcommand) {
  json j;
  j["subcommand"] = subcommand;
  j["config_hash"] = hash_hex(config_hash(config));
  j["seed"] = config.seed;
  j["split_seed"] = config.split_seed;
  if (!config.fixed_clock) {
    j["generated_at"] = pipeline::format_iso8601_utc(static_cast<double>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count()));
  }
  return j;
}

std::string write_report(const RunConfig& config, const std::string& name,
                         const json& j) {
  const std::string text = j.dump(2) + "\n";
  ckpt::write_file_atomic(join_path(config.out_dir, name), text);
  return text;
}

struct Dataset {
  std::vector<pipeline::KeyNode> nodes;
  std::vector<pipeline::UniformTrack> tracks;
  std::vector<pipeline::Window> labeled;
  std::size_t skipped_rows = 0;
  std::size_t dropped_vessels = 0;
  std::vector<long long> mmsis;  // distinct, sorted
  std::map<std::string, std::size_t> label_hist;
};

Dataset build_dataset(const RunConfig& config, const geo::EarthModel& earth) {
  if (config.data_csv.empty()) {
    fail(ErrorCode::InvalidConfig, "config: data_csv is required");
  }
  if (config.key_nodes.empty()) {
    fail(ErrorCode::InvalidConfig, "config: key_nodes is required");
  }
  Dataset ds;
  ds.nodes = pipeline::load_key_nodes(config.key_nodes);

  std::ifstream in(config.data_csv);
  if (!in) {
    fail(ErrorCode::IoError, "cannot open " + config.data_csv);
  }
  pipeline::ParseResult parsed = pipeline::parse_ais_csv(in);
  ds.skipped_rows = parsed.skipped_rows;
  std::vector<pipeline::AisRecord> records =
      config.cargo_only ? pipeline::filter_cargo(parsed.records)
                        : std::move(parsed.records);

  std::map<long long, std::vector<pipeline::AisRecord>> by_mmsi;
  for (auto& r : records) by_mmsi[r.mmsi].push_back(std::move(r));

  pipeline::InterpOptions iopts;
  iopts.dt_s = config.dt_s;
  iopts.max_gap_s = config.max_gap_s;
  pipeline::WindowOptions wopts;
  wopts.l_seq = config.l_seq;
  wopts.stride = config.stride;

  for (auto& [mmsi, vessel_records] : by_mmsi) {
    std::vector<pipeline::UniformTrack> tracks;
    try {
      tracks = pipeline::interpolate_uniform(std::move(vessel_records), iopts,
                                             earth);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TooShort) {
        ++ds.dropped_vessels;
        continue;
      }
      throw;
    }
    for (auto& track : tracks) {
      const auto ranges = pipeline::annotate_nkp(track, ds.nodes, earth);
      auto windows = pipeline::slide_windows(track, ranges, ds.nodes, wopts);
      for (auto& w : windows) {
        if (w.label) ++ds.label_hist[*w.label];
        ds.labeled.push_back(std::move(w));
      }
      ds.tracks.push_back(std::move(track));
    }
    ds.mmsis.push_back(mmsi);
  }
  return ds;
}

std::set<long long> to_set(const std::vector<long long>& v) {
  return {v.begin(), v.end()};
}

std::vector<pipeline::Window> windows_for(
    const Dataset& ds, const std::set<long long>& members) {
  std::vector<pipeline::Window> out;
  for (const auto& w : ds.labeled) {
    if (members.count(w.mmsi)) out.push_back(w);
  }
  return out;
}

// Normalization covering every labeled window plus the key-node centers,
// so oracle conditioning and rollouts near nodes stay in bounds.
pipeline::NormalizationSpec fit_spec(const Dataset& ds,
                                     const RunConfig& config) {
  pipeline::NormalizationSpec spec =
      pipeline::fit_normalization(ds.labeled, config.margin_deg, config.dt_s);
  for (const auto& node : ds.nodes) {
    spec.lat_min = std::min(spec.lat_min, node.center.lat_deg - config.margin_deg);
    spec.lat_max = std::max(spec.lat_max, node.center.lat_deg + config.margin_deg);
    spec.lon_min = std::min(spec.lon_min, node.center.lon_deg - config.margin_deg);
    spec.lon_max = std::max(spec.lon_max, node.center.lon_deg + config.margin_deg);
  }
  return spec;
}

pipeline::FeatureMatrix strip_to_4(const pipeline::FeatureMatrix& f) {
  if (f.cols == 4) return f;
  pipeline::FeatureMatrix out(f.rows, 4);
  for (std::size_t r = 0; r < f.rows; ++r) {
    for (std::size_t c = 0; c < 4; ++c) out.at(r, c) = f.at(r, c);
  }
  return out;
}

std::string encoder_path(const RunConfig& c) {
  return c.encoder_ckpt.empty() ? join_path(c.out_dir, "encoder.ckpt")
                                : c.encoder_ckpt;
}
std::string refdb_path(const RunConfig& c) {
  return c.refdb_ckpt.empty() ? join_path(c.out_dir, "refdb.ckpt")
                              : c.refdb_ckpt;
}
std::string predictor_path(const RunConfig& c, std::size_t channels) {
  if (channels == 4) {
    return c.predictor4_ckpt.empty() ? join_path(c.out_dir, "predictor4.ckpt")
                                     : c.predictor4_ckpt;
  }
  return c.predictor_ckpt.empty() ? join_path(c.out_dir, "predictor.ckpt")
                                  : c.predictor_ckpt;
}
std::string norm_path(const RunConfig& c) {
  return c.norm_json.empty() ? join_path(c.out_dir, "norm.json") : c.norm_json;
}

struct EvalTask {
  pipeline::Window history;          // first history_len samples
  metrics::Polyline truth;           // next horizon positions
  std::string label;                 // ground-truth NKP label
  geo::GeoPoint label_coords;
};

std::vector<EvalTask> make_tasks(const Dataset& ds,
                                 const std::set<long long>& members,
                                 const RunConfig& config) {
  if (config.history_len + config.horizon > config.l_seq) {
    fail(ErrorCode::InvalidConfig,
         "config: history_len + horizon exceeds l_seq");
  }
  std::vector<EvalTask> tasks;
  for (const auto& w : ds.labeled) {
    if (!members.count(w.mmsi) || !w.label || !w.nkp_coords) continue;
    EvalTask t;
    t.history = w;
    t.history.samples.assign(w.samples.begin(),
                             w.samples.begin() + config.history_len);
    t.truth.reserve(config.horizon);
    for (std::size_t i = 0; i < config.horizon; ++i) {
      t.truth.push_back(w.samples[config.history_len + i].pos);
    }
    t.label = *w.label;
    t.label_coords = *w.nkp_coords;
    tasks.push_back(std::move(t));
    if (tasks.size() >= config.max_tasks) break;
  }
  return tasks;
}

struct VariantSpec {
  std::string name;
  std::string model;     // ours | cvm
  std::size_t channels;  // 4 | 6 (ignored for cvm)
  std::string nkp_mode;  // oracle | predicted | wrong | none
};

struct Artifacts {
  pipeline::NormalizationSpec spec;
  std::optional<nkp::EncoderParams> encoder;
  std::optional<nkp::ReferenceDb> db;
  std::optional<motion::PredictorParams> predictor6;
  std::optional<motion::PredictorParams> predictor4;
};

struct TaskResult {
  bool ok = false;
  std::string error;
  double msep = 0.0, msec = 0.0, fd = 0.0;
  double wall_s = 0.0;
  int label_correct = -1;  // -1 = not applicable
};

TaskResult eval_one(const EvalTask& task, std::size_t task_index,
                    const VariantSpec& variant, const Artifacts& art,
                    const Dataset& ds, const RunConfig& config,
                    const geo::EarthModel& earth) {
  TaskResult res;
  try {
    std::optional<geo::GeoPoint> nkp;
    std::string predicted_label;
    const auto t0 = std::chrono::steady_clock::now();

    if (variant.model == "ours" && variant.channels == 6) {
      if (variant.nkp_mode == "oracle") {
        nkp = task.label_coords;
      } else if (variant.nkp_mode == "predicted") {
        pipeline::Window bare = task.history;
        bare.label.reset();
        bare.nkp_coords.reset();
        const auto features = pipeline::normalize(bare, art.spec, earth);
        const auto pred =
            nkp::predict_nkp(features, *art.db, *art.encoder, config.tau);
        predicted_label = pred.label;
        const auto it = art.db->label_coords.find(pred.label);
        if (it == art.db->label_coords.end()) {
          fail(ErrorCode::Internal, "predicted label without coordinates");
        }
        nkp = it->second;
      } else if (variant.nkp_mode == "wrong") {
        std::vector<const pipeline::KeyNode*> others;
        for (const auto& node : ds.nodes) {
          if (node.id != task.label) others.push_back(&node);
        }
        if (others.empty()) {
          fail(ErrorCode::InvalidConfig, "wrong-NKP mode needs >= 2 nodes");
        }
        std::mt19937_64 rng(mix(config.seed, task_index));
        nkp = others[rng() % others.size()]->center;
      } else {
        fail(ErrorCode::InvalidArgument,
             "unknown nkp mode: " + variant.nkp_mode);
      }
    }

    metrics::Polyline pred;
    if (variant.model == "cvm") {
      motion::PredictionTask pt{task.history, config.horizon, std::nullopt};
      pred = motion::cvm_baseline(pt, earth);
    } else {
      const auto& params =
          variant.channels == 4 ? *art.predictor4 : *art.predictor6;
      motion::PredictionTask pt{task.history, config.horizon, nkp};
      pt.history.label.reset();
      pred = motion::rollout_predict(pt, params, art.spec, earth);
    }
    res.wall_s = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0)
                     .count();

    res.msep = metrics::msep(pred, task.truth);
    res.msec = metrics::msec(pred, task.truth);
    res.fd = metrics::discrete_frechet(pred, task.truth);
    if (!predicted_label.empty()) {
      res.label_correct = predicted_label == task.label ? 1 : 0;
    }
    res.ok = true;
  } catch (const Error& e) {
    res.error = e.what();
  }
  return res;
}

json variant_row(const std::vector<EvalTask>& tasks,
                 const VariantSpec& variant, const Artifacts& art,
                 const Dataset& ds, const RunConfig& config,
                 const geo::EarthModel& earth) {
  std::vector<TaskResult> results(tasks.size());
  const std::size_t n_threads = std::min(eval_threads(), std::max<std::size_t>(
                                                             tasks.size(), 1));
  auto worker = [&](std::size_t offset) {
    for (std::size_t i = offset; i < tasks.size(); i += n_threads) {
      results[i] = eval_one(tasks[i], i, variant, art, ds, config, earth);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  for (auto& t : pool) t.join();

  // Deterministic merge in task order.
  double msep = 0, msec = 0, fd = 0, wall = 0;
  std::size_t ok = 0, correct = 0, voted = 0;
  for (const auto& r : results) {
    if (!r.ok) continue;
    ++ok;
    msep += r.msep;
    msec += r.msec;
    fd += r.fd;
    wall += r.wall_s;
    if (r.label_correct >= 0) {
      ++voted;
      correct += static_cast<std::size_t>(r.label_correct);
    }
  }
  json row;
  for (const auto& r : results) {
    if (!r.ok) {
      row["first_error"] = r.error;
      break;
    }
  }
  row["variant"] = variant.name;
  row["model"] = variant.model;
  row["channels"] = variant.model == "cvm" ? 0 : variant.channels;
  row["nkp_mode"] = variant.nkp_mode;
  row["n_tasks"] = tasks.size();
  row["n_failed"] = tasks.size() - ok;
  if (ok > 0) {
    row["msep"] = msep / static_cast<double>(ok);
    row["msec"] = msec / static_cast<double>(ok);
    row["mfd"] = fd / static_cast<double>(ok);
  }
  row["wall_time_s"] = config.fixed_clock ? 0.0 : wall;
  if (voted > 0) {
    row["nkp_accuracy"] =
        static_cast<double>(correct) / static_cast<double>(voted);
  }
  return row;
}

std::string rows_to_csv(const json& rows) {
  std::ostringstream csv;
  csv << "variant,model,channels,nkp_mode,msep,msec,mfd,wall_time_s,"
         "n_tasks,n_failed,nkp_accuracy\n";
  auto cell = [](const json& row, const char* key) {
    if (!row.contains(key)) return std::string();
    std::ostringstream s;
    s.precision(17);
    s << row.at(key).get<double>();
    return s.str();
  };
  for (const auto& row : rows) {
    csv << row.at("variant").get<std::string>() << ','
        << row.at("model").get<std::string>() << ','
        << row.at("channels").get<int>() << ','
        << row.at("nkp_mode").get<std::string>() << ',' << cell(row, "msep")
        << ',' << cell(row, "msec") << ',' << cell(row, "mfd") << ','
        << cell(row, "wall_time_s") << ',' << row.at("n_tasks").get<int>()
        << ',' << row.at("n_failed").get<int>() << ','
        << cell(row, "nkp_accuracy") << '\n';
  }
  return csv.str();
}

Artifacts load_artifacts(const RunConfig& config, bool need_encoder,
                         bool need_p6, bool need_p4) {
  Artifacts art;
  art.spec = ckpt::load_normalization(norm_path(config));
  if (need_encoder) {
    art.encoder = ckpt::load_encoder(encoder_path(config));
    art.db = ckpt::load_refdb(refdb_path(config));
  }
  if (need_p6) {
    art.predictor6 = ckpt::load_predictor(predictor_path(config, 6));
    if (art.predictor6->channels != 6) {
      fail(ErrorCode::ShapeMismatch,
           "predictor checkpoint is not the 6-channel model");
    }
  }
  if (need_p4) {
    art.predictor4 = ckpt::load_predictor(predictor_path(config, 4));
    if (art.predictor4->channels != 4) {
      fail(ErrorCode::ShapeMismatch,
           "predictor checkpoint is not the 4-channel model");
    }
  }
  return art;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  RunConfig c;
  c.raw_json = json_text;
  c.data_csv = j.value("data_csv", c.data_csv);
  c.key_nodes = j.value("key_nodes", c.key_nodes);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.encoder_ckpt = j.value("encoder_ckpt", c.encoder_ckpt);
  c.refdb_ckpt = j.value("refdb_ckpt", c.refdb_ckpt);
  c.predictor_ckpt = j.value("predictor_ckpt", c.predictor_ckpt);
  c.predictor4_ckpt = j.value("predictor4_ckpt", c.predictor4_ckpt);
  c.norm_json = j.value("norm_json", c.norm_json);
  c.dt_s = j.value("dt_s", c.dt_s);
  c.max_gap_s = j.value("max_gap_s", c.max_gap_s);
  c.l_seq = j.value("l_seq", c.l_seq);
  c.stride = j.value("stride", c.stride);
  c.quota = j.value("quota", c.quota);
  c.margin_deg = j.value("margin_deg", c.margin_deg);
  c.cargo_only = j.value("cargo_only", c.cargo_only);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.split_seed = j.value("split_seed", c.split_seed);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.enc_hidden = e.value("hidden", c.enc_hidden);
    c.enc_emb = e.value("emb", c.enc_emb);
  }
  if (j.contains("contrastive")) {
    const auto& t = j.at("contrastive");
    c.contrastive.margin = t.value("margin", c.contrastive.margin);
    c.contrastive.tau = t.value("tau", c.contrastive.tau);
    c.contrastive.top_k = t.value("top_k", c.contrastive.top_k);
    c.contrastive.learning_rate =
        t.value("learning_rate", c.contrastive.learning_rate);
    c.contrastive.epochs = t.value("epochs", c.contrastive.epochs);
    c.contrastive.batch_size = t.value("batch_size", c.contrastive.batch_size);
  }
  c.tau = j.value("tau", c.tau);
  if (j.contains("predictor")) {
    const auto& p = j.at("predictor");
    c.context = p.value("context", c.context);
    c.pred_hidden = p.value("hidden", c.pred_hidden);
    c.channels = p.value("channels", c.channels);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.vol_epochs = s.value("vol_epochs", c.schedule.vol_epochs);
    c.schedule.bc_epochs = s.value("bc_epochs", c.schedule.bc_epochs);
    c.schedule.cycles = s.value("cycles", c.schedule.cycles);
    c.schedule.learning_rate =
        s.value("learning_rate", c.schedule.learning_rate);
    c.schedule.bc_learning_rate =
        s.value("bc_learning_rate", c.schedule.bc_learning_rate);
  }
  c.max_train_windows = j.value("max_train_windows", c.max_train_windows);
  c.history_len = j.value("history_len", c.history_len);
  c.horizon = j.value("horizon", c.horizon);
  c.max_tasks = j.value("max_tasks", c.max_tasks);
  c.nkp_mode = j.value("nkp_mode", c.nkp_mode);
  c.model = j.value("model", c.model);
  c.seed = j.value("seed", c.seed);
  c.fixed_clock = j.value("fixed_clock", c.fixed_clock);
  c.info_instances = j.value("info_instances", c.info_instances);
  if (j.contains("synth")) {
    c.synth = synth::parse_synth_config_json(j.at("synth").dump());
  }
  if (c.channels != 4 && c.channels != 6) {
    fail(ErrorCode::InvalidConfig, "config: channels must be 4 or 6");
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(ckpt::read_file(path));
}

std::uint64_t config_hash(const RunConfig& config) {
  return fnv1a64(config.raw_json);
}

std::size_t eval_threads() {
  if (const char* env = std::getenv("HELM_SKETCH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return std::min<std::size_t>(static_cast<std::size_t>(v), 64);
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 4 : std::min<unsigned>(hw, 16);
}

std::string run_synth(const RunConfig& config) {
  if (!config.synth) {
    fail(ErrorCode::InvalidConfig, "synth: config lacks a synth section");
  }
  ensure_out_dir(config);
  const geo::EarthModel earth;
  synth::SynthConfig sc = *config.synth;
  const auto result = synth::synth_fleet(sc, earth);
  const std::string csv_path = config.data_csv.empty()
                                   ? join_path(config.out_dir, "ais.csv")
                                   : config.data_csv;
  ckpt::write_file_atomic(csv_path, synth::to_csv(result));

  // Write the key-node file alongside, so downstream subcommands can run
  // off this config unchanged.
  if (!config.key_nodes.empty()) {
    json nodes = json::array();
    for (const auto& n : sc.nodes) {
      nodes.push_back({{"id", n.id},
                       {"name", n.name},
                       {"lat", n.center.lat_deg},
                       {"lon", n.center.lon_deg},
                       {"radius_m", n.radius_m}});
    }
    ckpt::write_file_atomic(config.key_nodes, nodes.dump(2) + "\n");
  }

  json report = envelope(config, "synth");
  report["records"] = result.records.size();
  report["vessels"] = sc.n_vessels;
  report["csv"] = csv_path;
  return write_report(config, "synth_report.json", report);
}

std::string run_ingest(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  json report = envelope(config, "ingest");
  report["skipped_rows"] = ds.skipped_rows;
  report["dropped_vessels"] = ds.dropped_vessels;
  report["tracks"] = ds.tracks.size();
  report["vessels"] = ds.mmsis.size();
  report["labeled_windows"] = ds.labeled.size();
  report["label_histogram"] = ds.label_hist;
  return write_report(config, "ingest_report.json", report);
}

std::string run_train_encoder(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  auto train_windows = windows_for(ds, to_set(split.train));
  if (config.max_train_windows > 0 &&
      train_windows.size() > config.max_train_windows) {
    train_windows.resize(config.max_train_windows);
  }
  const pipeline::NormalizationSpec spec = fit_spec(ds, config);
  ckpt::save_normalization(norm_path(config), spec);

  std::vector<pipeline::FeatureMatrix> features;
  std::vector<std::string> labels;
  for (const auto& w : train_windows) {
    pipeline::Window bare = w;
    bare.nkp_coords.reset();  // the encoder must never see the NKP
    features.push_back(pipeline::normalize(bare, spec, earth));
    labels.push_back(*w.label);
  }
  nkp::ContrastiveConfig cc = config.contrastive;
  cc.seed = config.seed;
  const auto init = nkp::init_encoder(config.enc_hidden, config.enc_emb,
                                      mix(config.seed, 0xe17c0de));
  const auto trained = nkp::train_encoder(features, labels, cc, init);
  ckpt::save_encoder(encoder_path(config), trained.params);

  json report = envelope(config, "train-encoder");
  report["train_windows"] = train_windows.size();
  report["loss_first"] = trained.loss_curve.front();
  report["loss_last"] = trained.loss_curve.back();
  report["encoder_ckpt"] = encoder_path(config);
  report["norm_json"] = norm_path(config);
  return write_report(config, "train_encoder_report.json", report);
}

std::string run_build_db(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  const auto train_windows = windows_for(ds, to_set(split.train));
  const auto refs = pipeline::sample_reference_set(train_windows, config.quota,
                                                   mix(config.seed, 0xdb));
  const auto spec = ckpt::load_normalization(norm_path(config));
  const auto encoder = ckpt::load_encoder(encoder_path(config));

  std::vector<pipeline::FeatureMatrix> features;
  for (const auto& w : refs) {
    pipeline::Window bare = w;
    bare.nkp_coords.reset();
    features.push_back(pipeline::normalize(bare, spec, earth));
  }
  const auto db = nkp::build_reference_db(refs, features, encoder, ds.nodes);
  ckpt::save_refdb(refdb_path(config), db);
  {  // Human-readable sidecar: dims, label table, creation metadata.
    json side = envelope(config, "build-db");
    side["dim"] = db.dim;
    side["entries"] = db.entries.size();
    json labels = json::array();
    for (const auto& [label, center] : db.label_coords) {
      labels.push_back({{"id", label},
                        {"lat", center.lat_deg},
                        {"lon", center.lon_deg}});
    }
    side["labels"] = labels;
    ckpt::write_file_atomic(refdb_path(config) + ".json", side.dump(2) + "\n");
  }

  json report = envelope(config, "build-db");
  report["entries"] = db.entries.size();
  report["labels"] = db.label_coords.size();
  report["refdb_ckpt"] = refdb_path(config);
  return write_report(config, "build_db_report.json", report);
}

std::string run_train_predictor(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  auto train_windows = windows_for(ds, to_set(split.train));
  if (config.max_train_windows > 0 &&
      train_windows.size() > config.max_train_windows) {
    train_windows.resize(config.max_train_windows);
  }
  if (train_windows.empty()) {
    fail(ErrorCode::EmptyInput, "train-predictor: no labeled training windows");
  }
  const auto spec = ckpt::load_normalization(norm_path(config));

  std::vector<pipeline::FeatureMatrix> batch;
  for (auto& w : train_windows) {
    auto f = pipeline::normalize(w, spec, earth);  // 6 channels (labeled)
    batch.push_back(config.channels == 4 ? strip_to_4(f) : std::move(f));
  }
  motion::TrainSchedule schedule = config.schedule;
  schedule.seed = config.seed;
  const auto init =
      motion::init_predictor(config.context, config.channels,
                             config.pred_hidden, mix(config.seed, 0x9ced));
  const auto trained = motion::train_alternating(train_windows, batch,
                                                 schedule, init, spec, earth);
  ckpt::save_predictor(predictor_path(config, config.channels),
                       trained.params);
  {  // Sidecar: the schedule, normalization hash, and seed behind the model.
    json side = envelope(config, "train-predictor");
    side["schedule"] = {{"vol_epochs", schedule.vol_epochs},
                        {"bc_epochs", schedule.bc_epochs},
                        {"cycles", schedule.cycles},
                        {"learning_rate", schedule.learning_rate},
                        {"bc_learning_rate", schedule.bc_learning_rate}};
    side["normalization_hash"] =
        hash_hex(fnv1a64(ckpt::read_file(norm_path(config))));
    side["channels"] = config.channels;
    ckpt::write_file_atomic(
        predictor_path(config, config.channels) + ".json", side.dump(2) + "\n");
  }

  json report = envelope(config, "train-predictor");
  report["channels"] = config.channels;
  report["train_windows"] = train_windows.size();
  if (!trained.vol_curve.empty()) {
    report["vol_first"] = trained.vol_curve.front();
    report["vol_last"] = trained.vol_curve.back();
  }
  if (!trained.coord_curve.empty()) {
    report["coord_first"] = trained.coord_curve.front();
    report["coord_last"] = trained.coord_curve.back();
  }
  report["predictor_ckpt"] = predictor_path(config, config.channels);
  return write_report(config, "train_predictor_report.json", report);
}

std::string run_predict(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  const auto tasks = make_tasks(ds, to_set(split.test), config);
  if (tasks.empty()) {
    fail(ErrorCode::EmptyInput, "predict: no test tasks");
  }
  const bool ours = config.model == "ours";
  const bool predicted = config.nkp_mode == "predicted";
  const Artifacts art = load_artifacts(
      config, ours && config.channels == 6 && predicted,
      ours && config.channels == 6, ours && config.channels == 4);

  std::vector<geojson::PolylineFeature> features;
  std::size_t emitted = 0, failed = 0;
  VariantSpec variant{config.nkp_mode, config.model, config.channels,
                      config.nkp_mode};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    metrics::Polyline history_line;
    for (const auto& s : task.history.samples) history_line.push_back(s.pos);

    TaskResult r = eval_one(task, i, variant, art, ds, config, earth);
    if (!r.ok) {
      ++failed;
      continue;
    }
    // Re-run inference to capture the polyline (eval_one aggregates only).
    metrics::Polyline pred;
    if (config.model == "cvm") {
      motion::PredictionTask pt{task.history, config.horizon, std::nullopt};
      pred = motion::cvm_baseline(pt, earth);
    } else {
      std::optional<geo::GeoPoint> nkp;
      if (config.channels == 6) {
        if (config.nkp_mode == "oracle") {
          nkp = task.label_coords;
        } else if (config.nkp_mode == "predicted") {
          pipeline::Window bare = task.history;
          bare.label.reset();
          bare.nkp_coords.reset();
          const auto f = pipeline::normalize(bare, art.spec, earth);
          const auto p = nkp::predict_nkp(f, *art.db, *art.encoder, config.tau);
          nkp = art.db->label_coords.at(p.label);
        } else {
          std::mt19937_64 rng(mix(config.seed, i));
          std::vector<const pipeline::KeyNode*> others;
          for (const auto& node : ds.nodes) {
            if (node.id != task.label) others.push_back(&node);
          }
          nkp = others[rng() % others.size()]->center;
        }
      }
      motion::PredictionTask pt{task.history, config.horizon, nkp};
      pt.history.label.reset();
      pred = motion::rollout_predict(
          pt, config.channels == 4 ? *art.predictor4 : *art.predictor6,
          art.spec, earth);
    }
    const long long mmsi = task.history.mmsi;
    features.push_back({history_line, "history", config.model, mmsi, config.seed});
    features.push_back({task.truth, "truth", config.model, mmsi, config.seed});
    features.push_back({pred, "prediction", config.model, mmsi, config.seed});
    ++emitted;
  }
  const std::string geo_path = join_path(config.out_dir, "predictions.geojson");
  ckpt::write_file_atomic(geo_path, geojson::emit_geojson(features));

  json report = envelope(config, "predict");
  report["tasks"] = tasks.size();
  report["emitted"] = emitted;
  report["failed"] = failed;
  report["geojson"] = geo_path;
  report["model"] = config.model;
  report["nkp_mode"] = config.nkp_mode;
  report["channels"] = config.channels;
  return write_report(config, "predict_report.json", report);
}

std::string run_evaluate(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  const auto tasks = make_tasks(ds, to_set(split.test), config);
  if (tasks.empty()) {
    fail(ErrorCode::EmptyInput, "evaluate: no test tasks");
  }
  const bool ours = config.model == "ours";
  const Artifacts art = load_artifacts(
      config, ours && config.channels == 6 && config.nkp_mode == "predicted",
      ours && config.channels == 6, ours && config.channels == 4);

  VariantSpec variant{config.model + "_" + std::to_string(config.channels) +
                          "ch_" + config.nkp_mode,
                      config.model, config.channels,
                      config.model == "cvm" || config.channels == 4
                          ? "none"
                          : config.nkp_mode};
  json rows = json::array();
  rows.push_back(variant_row(tasks, variant, art, ds, config, earth));

  json report = envelope(config, "evaluate");
  report["rows"] = rows;
  report["threads"] = eval_threads();
  ckpt::write_file_atomic(join_path(config.out_dir, "evaluate_report.csv"),
                          rows_to_csv(rows));
  return write_report(config, "evaluate_report.json", report);
}

std::string run_ablate(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  const Dataset ds = build_dataset(config, earth);
  const auto split = pipeline::split_by_mmsi(ds.mmsis, config.train_frac,
                                             config.val_frac, config.split_seed);
  const auto tasks = make_tasks(ds, to_set(split.test), config);
  if (tasks.empty()) {
    fail(ErrorCode::EmptyInput, "ablate: no test tasks");
  }
  const Artifacts art = load_artifacts(config, true, true, true);

  const std::vector<VariantSpec> variants = {
      {"nkp_oracle", "ours", 6, "oracle"},
      {"nkp_predicted", "ours", 6, "predicted"},
      {"nkp_wrong", "ours", 6, "wrong"},
      {"ch4", "ours", 4, "none"},
      {"cvm", "cvm", 0, "none"},
  };
  json rows = json::array();
  for (const auto& v : variants) {
    rows.push_back(variant_row(tasks, v, art, ds, config, earth));
  }
  json report = envelope(config, "ablate");
  report["rows"] = rows;
  report["threads"] = eval_threads();
  ckpt::write_file_atomic(join_path(config.out_dir, "ablate_report.csv"),
                          rows_to_csv(rows));
  return write_report(config, "ablate_report.json", report);
}

std::string run_info_check(const RunConfig& config) {
  ensure_out_dir(config);
  std::size_t mono = 0, tower = 0, bayes = 0;
  double max_i_violation = 0.0;
  for (std::size_t i = 0; i < config.info_instances; ++i) {
    const auto d = info::random_distribution(3, 3, 3, mix(config.seed, i));
    const auto m = info::check_entropy_monotonicity(d);
    if (m.pass) ++mono;
    max_i_violation = std::max(max_i_violation, -m.i_zy_given_x);
    if (info::check_tower(d)) ++tower;
    const auto loss = info::random_loss(3, 3, mix(config.seed, i + 1000003));
    if (info::check_bayes_risk(d, loss).pass) ++bayes;
  }
  json report = envelope(config, "info-check");
  report["instances"] = config.info_instances;
  report["entropy_monotonicity_pass"] = mono;
  report["tower_pass"] = tower;
  report["bayes_risk_pass"] = bayes;
  report["max_negative_cmi"] = max_i_violation;
  const bool all = mono == config.info_instances &&
                   tower == config.info_instances &&
                   bayes == config.info_instances;
  report["pass"] = all;
  const std::string text = write_report(config, "info_check_report.json", report);
  if (!all) {
    fail(ErrorCode::Internal, "info-check: an instance failed");
  }
  return text;
}

std::string run_verify(const RunConfig& config) {
  ensure_out_dir(config);
  const geo::EarthModel earth;
  std::map<std::string, bool> checks;

  {  // Kinematic round trip: step -> velocity_from_displacement -> step.
    std::mt19937_64 rng(mix(config.seed, 1));
    std::uniform_real_distribution<double> ulat(-60, 60), ulon(-180, 180),
        usog(0.5, 15.0), ucog(0.0, 2.0 * geo::kPi);
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      const geo::GeoPoint p0{ulat(rng), ulon(rng)};
      const geo::VelocityOverGround v{usog(rng), ucog(rng)};
      const auto p1 = geo::step(p0, v, 300.0, earth);
      const auto v2 = geo::velocity_from_displacement(p0, p1, 300.0, earth);
      const auto p2 = geo::step(p0, v2, 300.0, earth);
      ok = std::abs(p2.lat_deg - p1.lat_deg) < 1e-9 &&
           std::abs(p2.lon_deg - p1.lon_deg) < 1e-9;
    }
    checks["kinematics_roundtrip"] = ok;
  }
  {  // Limit-branch continuity at |cos(course)| = 1e-4.
    std::mt19937_64 rng(mix(config.seed, 2));
    std::uniform_real_distribution<double> ulat(-60, 60);
    const double v = 5.0, dt = 60.0, R = earth.radius_m;
    bool ok = true;
    for (int i = 0; i < 100 && ok; ++i) {
      const double lat0 = ulat(rng) * geo::kDegToRad;
      for (const double c : {1e-4, -1e-4}) {
        const double s = std::sqrt(1.0 - c * c);
        const double lat1 = lat0 + v * c * dt / R;
        const double general = (s / c) * geo::sec_integral_diff(lat0, lat1);
        const double limit = v * s * dt / (R * std::cos(lat0));
        ok = ok && std::abs(general - limit) * geo::kRadToDeg < 1e-10;
      }
    }
    checks["limit_branch_continuity"] = ok;
  }
  {  // Frechet properties: symmetry, identity, lower bound, translation.
    std::mt19937_64 rng(mix(config.seed, 3));
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<std::size_t> len(1, 10);
    bool ok = true;
    for (int i = 0; i < 100 && ok; ++i) {
      metrics::Polyline a(len(rng)), b(len(rng));
      for (auto& p : a) p = {u(rng), u(rng)};
      for (auto& p : b) p = {u(rng), u(rng)};
      const double d = metrics::discrete_frechet(a, b);
      ok = ok && d == metrics::discrete_frechet(b, a);
      ok = ok && metrics::discrete_frechet(a, a) == 0.0;
      const double dx0 = std::hypot(a.front().lat_deg - b.front().lat_deg,
                                    a.front().lon_deg - b.front().lon_deg);
      const double dx1 = std::hypot(a.back().lat_deg - b.back().lat_deg,
                                    a.back().lon_deg - b.back().lon_deg);
      ok = ok && d >= std::max(dx0, dx1) - 1e-12;
      metrics::Polyline at = a, bt = b;
      for (auto& p : at) p.lat_deg += 0.25;
      for (auto& p : bt) p.lat_deg += 0.25;
      ok = ok && std::abs(metrics::discrete_frechet(at, bt) - d) < 1e-9;
    }
    checks["frechet_properties"] = ok;
  }
  {  // Curvature: sampled circle within 5% of 1/r; straight lines zero MSEC.
    const double r = 0.5;
    metrics::Polyline circle;
    for (int k = 0; k < 60; ++k) {
      circle.push_back({r * std::cos(0.05 * k), r * std::sin(0.05 * k)});
    }
    const auto prof = metrics::curvature_profile(circle);
    bool ok = true;
    for (std::size_t i = 1; i + 1 < prof.size(); ++i) {
      ok = ok && std::abs(prof[i] - 1.0 / r) <= 0.05 / r;
    }
    metrics::Polyline s1, s2;
    for (int k = 0; k < 20; ++k) {
      s1.push_back({0.01 * k, 0.0});
      s2.push_back({0.01 * k, 1.0});
    }
    ok = ok && metrics::msec(s1, s2) == 0.0;
    checks["curvature"] = ok;
  }
  {  // Information-theory sweep (reduced count; info-check runs the full one).
    bool ok = true;
    for (std::size_t i = 0; i < 200 && ok; ++i) {
      const auto d = info::random_distribution(3, 3, 3, mix(config.seed, i));
      ok = info::check_entropy_monotonicity(d).pass && info::check_tower(d) &&
           info::check_bayes_risk(
               d, info::random_loss(3, 3, mix(config.seed, i + 7)))
               .pass;
    }
    checks["info_inequalities"] = ok;
  }
  {  // Checkpoint round trips are bit-identical.
    const auto enc = nkp::init_encoder(8, 6, mix(config.seed, 5));
    const std::string path = join_path(config.out_dir, "verify_enc.ckpt");
    ckpt::save_encoder(path, enc);
    const auto back = ckpt::load_encoder(path);
    bool ok = back.w == enc.w && back.hidden == enc.hidden &&
              back.emb == enc.emb && back.in_ch == enc.in_ch;
    const auto pred = motion::init_predictor(4, 6, 8, mix(config.seed, 6));
    const std::string ppath = join_path(config.out_dir, "verify_pred.ckpt");
    ckpt::save_predictor(ppath, pred);
    const auto pback = ckpt::load_predictor(ppath);
    ok = ok && pback.w == pred.w && pback.context == pred.context;
    checks["checkpoint_roundtrip"] = ok;
  }
  {  // GeoJSON parse-back: coordinates round-trip exactly.
    metrics::Polyline line = {{10.25, -20.5}, {10.5, -20.25}};
    const std::string text =
        geojson::emit_geojson({{line, "prediction", "ours", 7, 42}});
    const json parsed = json::parse(text);
    const auto& coords =
        parsed.at("features").at(0).at("geometry").at("coordinates");
    checks["geojson_roundtrip"] =
        parsed.at("type") == "FeatureCollection" &&
        coords.at(0).at(0).get<double>() == -20.5 &&
        coords.at(0).at(1).get<double>() == 10.25 &&
        coords.at(1).at(0).get<double>() == -20.25 &&
        coords.at(1).at(1).get<double>() == 10.5;
  }
  {  // MMSI split partition: disjoint and complete.
    std::vector<long long> mmsis;
    for (long long m = 0; m < 97; ++m) mmsis.push_back(1000 + m);
    const auto split =
        pipeline::split_by_mmsi(mmsis, 0.7, 0.1, mix(config.seed, 8));
    std::set<long long> all;
    for (const auto& part : {split.train, split.val, split.test}) {
      all.insert(part.begin(), part.end());
    }
    checks["mmsi_split_partition"] =
        all.size() == mmsis.size() &&
        split.train.size() + split.val.size() + split.test.size() ==
            mmsis.size();
  }
  {  // Seeded determinism of the synthetic generator.
    synth::SynthConfig sc;
    if (config.synth) {
      sc = *config.synth;
    } else {
      sc.nodes = {{"a", "a", {0.0, 0.0}, 2000.0},
                  {"b", "b", {0.5, 0.5}, 2000.0}};
      sc.edges = {{"a", "b"}};
      sc.n_vessels = 2;
      sc.route_legs = 1;
      sc.seed = config.seed;
    }
    const auto r1 = synth::synth_fleet(sc, earth);
    const auto r2 = synth::synth_fleet(sc, earth);
    checks["synth_determinism"] = synth::to_csv(r1) == synth::to_csv(r2);
  }

  bool all = true;
  json jchecks;
  for (const auto& [name, ok] : checks) {
    jchecks[name] = ok;
    all = all && ok;
  }
  json report = envelope(config, "verify");
  report["checks"] = jchecks;
  report["pass"] = all;
  const std::string text = write_report(config, "verify_report.json", report);
  if (!all) {
    std::string failed;
    for (const auto& [name, ok] : checks) {
      if (!ok) failed += (failed.empty() ? "" : ", ") + name;
    }
    fail(ErrorCode::Internal, "verify failed: " + failed);
  }
  return text;
}

int run(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    RunConfig config = options.config_path.empty()
                           ? RunConfig{}
                           : load_run_config(options.config_path);
    if (options.seed) config.seed = *options.seed;
    if (options.channels) {
      if (*options.channels != 4 && *options.channels != 6) {
        fail(ErrorCode::InvalidArgument, "--channels must be 4 or 6");
      }
      config.channels = static_cast<std::size_t>(*options.channels);
    }
    if (options.nkp_mode) {
      if (*options.nkp_mode != "predicted" && *options.nkp_mode != "oracle" &&
          *options.nkp_mode != "wrong") {
        fail(ErrorCode::InvalidArgument,
             "--nkp must be predicted, oracle, or wrong");
      }
      config.nkp_mode = *options.nkp_mode;
    }
    if (options.model) {
      if (*options.model != "ours" && *options.model != "cvm") {
        fail(ErrorCode::InvalidArgument, "--model must be ours or cvm");
      }
      config.model = *options.model;
    }
    if (options.fixed_clock) config.fixed_clock = true;

    const std::string& cmd = options.subcommand;
    std::string report;
    if (cmd == "synth") report = run_synth(config);
    else if (cmd == "ingest") report = run_ingest(config);
    else if (cmd == "train-encoder") report = run_train_encoder(config);
    else if (cmd == "build-db") report = run_build_db(config);
    else if (cmd == "train-predictor") report = run_train_predictor(config);
    else if (cmd == "predict") report = run_predict(config);
    else if (cmd == "evaluate") report = run_evaluate(config);
    else if (cmd == "ablate") report = run_ablate(config);
    else if (cmd == "info-check") report = run_info_check(config);
    else if (cmd == "verify") report = run_verify(config);
    else {
      fail(ErrorCode::InvalidArgument, "unknown subcommand: " + cmd);
    }
    out << report;
    return 0;
  } catch (const Error& e) {
    err << json{{"error", static_cast<int>(e.code())}, {"message", e.what()}}
               .dump()
        << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << json{{"error", static_cast<int>(ErrorCode::Internal)},
                {"message", e.what()}}
               .dump()
        << "\n";
    return static_cast<int>(ErrorCode::Internal);
  }
}

}  // namespace nkpcast::harness
