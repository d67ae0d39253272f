// Command-line front end: simulate worlds, run the filter, benchmark updates, summarize.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "csmsckf/config.hpp"
#include "csmsckf/evaluation.hpp"
#include "csmsckf/log.hpp"
#include "csmsckf/stream_io.hpp"

namespace fs = std::filesystem;
using namespace csmsckf;

namespace {

constexpr int kExitDiverged = 2;

Config load_or_default(const std::string& path) {
  return path.empty() ? Config{} : load_config(path);
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const fs::path& out) {
  Config cfg = load_or_default(config_path);
  if (seed) cfg.sim.seed = *seed;
  const SimWorld world = generate_world(cfg.sim);
  write_world(world, cfg, out);
  std::printf("wrote %zu IMU samples, %zu frames, %zu matches, %zu keyframes to %s\n",
              world.imu.size(), world.frames.size(), world.matches.size(),
              world.map.keyframes().size(), out.string().c_str());
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, int runs,
            const std::vector<std::string>& modes, std::optional<bool> relin,
            const std::string& input, const fs::path& out) {
  Config cfg = load_or_default(config_path);
  if (seed) cfg.sim.seed = *seed;
  if (relin) cfg.filter.relinearize = *relin;
  if (!input.empty() && runs != 1) throw std::invalid_argument("--runs needs a simulated world");

  bool diverged = false;
  for (int k = 0; k < runs; ++k) {
    Config run_cfg = cfg;
    run_cfg.sim.seed = cfg.sim.seed + static_cast<std::uint64_t>(k);
    const SimWorld world = input.empty() ? generate_world(run_cfg.sim) : read_world(input, &run_cfg);
    if (relin) run_cfg.filter.relinearize = *relin;
    for (const auto& name : modes) {
      Config mode_cfg = run_cfg;
      mode_cfg.filter.mode = mode_from_string(name);
      const RunReport rep = run(world, mode_cfg.filter, config_hash(mode_cfg));
      const std::string stem = to_string(mode_cfg.filter.mode) +
                               (mode_cfg.filter.relinearize ? "_relin" : "") + "_seed" +
                               std::to_string(world.config.seed);
      write_report(rep, out, stem);
      std::printf("%-10s seed %-6llu rmse %8.3f m  nees %7.2f  in3sigma %5.1f%%  matches %d%s\n",
                  rep.mode.c_str(), static_cast<unsigned long long>(rep.seed), rep.rmse,
                  rep.nees_mean, 100.0 * rep.inside_3sigma, rep.matches_used,
                  rep.diverged ? "  DIVERGED" : "");
      if (rep.diverged) {
        log::warn("run diverged: ", rep.failure);
        diverged = true;
      }
    }
  }
  return diverged ? kExitDiverged : 0;
}

int cmd_bench(const std::vector<int>& dims, int active_dim, const fs::path& out) {
  const TimingReport rep = timing_harness(dims, active_dim);
  for (const auto& p : rep.points) {
    std::printf("n=%-6d schmidt %9.3f ms  ekf %9.3f ms\n", p.nuisance_dim, p.schmidt_ms, p.ekf_ms);
  }
  std::printf("log-log slope: schmidt %.3f  ekf %.3f\n", rep.schmidt_slope, rep.ekf_slope);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(out / "bench.json") << timing_json(rep);
  }
  return 0;
}

// Aggregates every run summary found in a directory, grouped by mode.
int cmd_report(const fs::path& dir) {
  struct Acc {
    int runs = 0, diverged = 0;
    double rmse = 0.0, nees = 0.0, inside = 0.0;
  };
  std::map<std::string, Acc> by_mode;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() != ".json" || p.stem().string().ends_with("_timing") ||
        p.filename() == "report.json" || p.filename() == "bench.json") {
      continue;
    }
    std::ifstream in(p);
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("mode")) continue;
    std::string key = j.at("mode").get<std::string>();
    if (j.value("relinearize", false)) key += "+relin";
    Acc& a = by_mode[key];
    ++a.runs;
    if (j.value("diverged", false)) {
      ++a.diverged;
      continue;
    }
    a.rmse += j.value("rmse_m", 0.0);
    a.nees += j["nees_mean"].is_number() ? j["nees_mean"].get<double>() : 0.0;
    a.inside += j.value("inside_3sigma", 0.0);
  }
  nlohmann::ordered_json out;
  std::printf("%-16s %5s %9s %9s %10s %8s\n", "mode", "runs", "rmse[m]", "nees", "in3sigma",
              "diverged");
  for (const auto& [mode, a] : by_mode) {
    const int ok = a.runs - a.diverged;
    const double n = ok > 0 ? ok : 1;
    std::printf("%-16s %5d %9.3f %9.2f %9.1f%% %8d\n", mode.c_str(), a.runs, a.rmse / n,
                a.nees / n, 100.0 * a.inside / n, a.diverged);
    out[mode] = {{"runs", a.runs},
                 {"diverged", a.diverged},
                 {"mean_rmse_m", a.rmse / n},
                 {"mean_nees", a.nees / n},
                 {"mean_inside_3sigma", a.inside / n}};
  }
  std::ofstream(dir / "report.json") << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Map-based visual-inertial localization with a Schmidt-EKF"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress messages");

  std::string config_path;
  std::uint64_t seed_value = 0;
  std::string out_dir = "out";

  auto* sim = app.add_subcommand("simulate", "Generate a world and write its streams");
  sim->add_option("-c,--config", config_path, "YAML config")->check(CLI::ExistingFile);
  auto* sim_seed = sim->add_option("-s,--seed", seed_value, "Random seed");
  sim->add_option("-o,--out", out_dir, "Output directory");

  std::vector<std::string> modes{"mm"};
  int runs = 1;
  std::string input;
  bool relin = false, no_relin = false;
  auto* run_cmd = app.add_subcommand("run", "Run the filter and write reports");
  run_cmd->add_option("-c,--config", config_path, "YAML config")->check(CLI::ExistingFile);
  auto* run_seed = run_cmd->add_option("-s,--seed", seed_value, "Random seed (first of --runs)");
  run_cmd->add_option("-m,--mode", modes, "odometry | sm | mm | mapconst (repeatable)");
  run_cmd->add_option("-n,--runs", runs, "Monte-Carlo runs with consecutive seeds")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("-i,--input", input, "Read streams written by simulate")
      ->check(CLI::ExistingDirectory);
  run_cmd->add_flag("--relin", relin, "Enable re-linearization");
  run_cmd->add_flag("--no-relin", no_relin, "Disable re-linearization");
  run_cmd->add_option("-o,--out", out_dir, "Output directory");

  std::vector<int> dims{60, 600, 6000};
  auto* bench = app.add_subcommand("bench", "Time Schmidt vs full-EKF updates");
  bench->add_option("--dims", dims, "Nuisance dimensions (multiples of 6)");
  int active_dim = 27;
  bench->add_option("--active", active_dim, "Active dimension, 21 + 6 * clones");
  bench->add_option("-o,--out", out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Summarize the run reports in a directory");
  report->add_option("-o,--out", out_dir, "Directory holding run summaries")
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (verbose) log::set_level(log::Level::kInfo);

  try {
    if (*sim) {
      return cmd_simulate(config_path, *sim_seed ? std::optional(seed_value) : std::nullopt,
                          out_dir);
    }
    if (*run_cmd) {
      if (relin && no_relin) throw std::invalid_argument("--relin and --no-relin conflict");
      std::optional<bool> r;
      if (relin) r = true;
      if (no_relin) r = false;
      return cmd_run(config_path, *run_seed ? std::optional(seed_value) : std::nullopt, runs,
                     modes, r, input, out_dir);
    }
    if (*bench) return cmd_bench(dims, active_dim, out_dir);
    if (*report) return cmd_report(out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
