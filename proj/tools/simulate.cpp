// Copyright 2026 The risfeel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// simulate: run one experiment described by a config file and write its
// result CSV plus a JSON run manifest next to it.
//
// Exit codes: 0 success, 2 config error, 3 runtime error.
// Log level: RISFEEL_LOG_LEVEL (trace, debug, info, warn, error, off).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "risfeel/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("simulate");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("RISFEEL_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate over-the-air federated learning experiments"};
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool print_only = false;
  app.add_option("config", config_path, "Experiment config file (INI)")->required();
  app.add_option("--out", out_path, "Result CSV path (overrides experiment.output)");
  app.add_option("--seed", seed, "Master seed (overrides experiment.seed)");
  app.add_option("--threads", threads, "Worker threads; 0 = hardware concurrency")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--print-config", print_only, "Print the resolved config and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  setup_logging();

  risfeel::ExperimentConfig cfg;
  try {
    cfg = risfeel::parse_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_path.empty()) cfg.output = out_path;
  } catch (const risfeel::Error& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  }
  if (print_only) {
    std::cout << risfeel::print_config(cfg);
    return 0;
  }

  try {
    risfeel::RunOptions opts;
    opts.threads = threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                : threads;
    opts.progress = [](const std::string& msg) { spdlog::debug("{}", msg); };
    spdlog::info("running {} with seed {} on {} thread(s)", risfeel::to_string(cfg.kind), cfg.seed,
                 opts.threads);
    const auto table = risfeel::run_experiment(cfg, opts);

    std::ofstream csv(cfg.output);
    if (!csv) throw risfeel::Error("cannot write " + cfg.output);
    table.write_csv(csv);
    const std::string manifest_path = cfg.output + ".manifest.json";
    std::ofstream manifest(manifest_path);
    if (!manifest) throw risfeel::Error("cannot write " + manifest_path);
    manifest << risfeel::run_manifest(cfg, table).dump(2) << "\n";
    spdlog::info("wrote {} rows to {}", table.rows.size(), cfg.output);
  } catch (const std::exception& e) {
    spdlog::error("runtime error: {}", e.what());
    return kExitRuntime;
  }
  return 0;
}
