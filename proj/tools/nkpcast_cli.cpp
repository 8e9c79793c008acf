// Command-line front end. Parses flags and dispatches through the C API
// only (nkpcast.h); all domain logic lives behind the shared library.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "nkpcast.h"

int main(int argc, char** argv) {
  CLI::App app{"Vessel trajectory prediction toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int channels = 0;
  std::string nkp_mode;
  std::string model;
  bool fixed_clock = false;

  const std::vector<std::string> names = {
      "synth",   "ingest",  "train-encoder",   "build-db", "train-predictor",
      "predict", "evaluate", "ablate", "info-check", "verify"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run config JSON path");
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--channels", channels, "predictor channels")
        ->check(CLI::IsMember({4, 6}));
    sub->add_option("--nkp", nkp_mode, "NKP conditioning source")
        ->check(CLI::IsMember({"predicted", "oracle", "wrong"}));
    sub->add_option("--model", model, "prediction model")
        ->check(CLI::IsMember({"ours", "cvm"}));
    sub->add_flag("--fixed-clock", fixed_clock,
                  "suppress wall-clock fields for byte-identical reports");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  const nkpcast_status status = nkpcast_run(
      subcommand.c_str(), config_path.empty() ? nullptr : config_path.c_str(),
      seed_set ? 1 : 0, seed, channels,
      nkp_mode.empty() ? nullptr : nkp_mode.c_str(),
      model.empty() ? nullptr : model.c_str(), fixed_clock ? 1 : 0);
  if (status != NKPCAST_OK) {
    std::fprintf(stderr, "%s\n", nkpcast_last_error());
  }
  return static_cast<int>(status);
}
