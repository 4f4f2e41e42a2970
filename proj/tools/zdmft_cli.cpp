// zdmft: run a single DMFT point or a Zeno sweep from a JSON configuration.
//
//   zdmft run   --config cfg.json --out dir [--seed N] [--plots]
//   zdmft sweep --config cfg.json --out dir [--jobs N] [--seed N] [--plots]
//
// Exit codes: 0 success, 1 not converged, 2 invalid configuration or output
// directory, 3 numerical failure. Log level from ZDMFT_LOG (trace..off).

#include "zdmft/zdmft.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace zdmft;

namespace {

enum ExitCode { kOk = 0, kNotConverged = 1, kInvalid = 2, kFailed = 3 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("zdmft");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("ZDMFT_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("ZDMFT_LOG={} not recognized; keeping info", env);
    else
      spdlog::set_level(level);
  }
}

void prepare_output_dir(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json"))
    throw std::invalid_argument("output directory " + dir.string() + " already holds a run");
  fs::create_directories(dir);
}

std::vector<std::string> write_point(const fs::path& dir, const DmftSolution& sol, bool plots) {
  std::vector<std::string> files = {"bath.json", "greens.csv", "observables.json", "history.csv"};
  write_text(dir / "bath.json", bath_json(sol).dump(2) + "\n");
  write_text(dir / "greens.csv", greens_csv(sol.gf_imp));
  write_text(dir / "observables.json", observables_json(sol).dump(2) + "\n");
  write_text(dir / "history.csv", history_csv(sol.history));
  if (plots) {
    const auto sf = spectral_functions(sol.gf_imp);
    write_text(dir / "spectral.svg", svg_line_plot("local spectral and correlation functions", "omega",
                                                   {{"A_loc", sol.gf_imp.omega, sf.A}, {"C_loc", sol.gf_imp.omega, sf.C}}));
    files.emplace_back("spectral.svg");
  }
  return files;
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool plots = false;
};

RunConfig load(const Options& opt) {
  RunConfig rc = load_run_config(opt.config);
  if (opt.seed) rc.dmft.seed = *opt.seed;
  if (opt.jobs) {
    rc.sweep.jobs = *opt.jobs;
    validate_run_config(rc);
  }
  return rc;
}

int run_single(const Options& opt) {
  RunConfig rc = load(opt);
  const fs::path dir = opt.out;
  prepare_output_dir(dir);

  RunManifest manifest;
  manifest.command = "run";
  manifest.config = to_json(rc);
  manifest.seed = rc.dmft.seed;
  manifest.started = std::chrono::system_clock::now();
  int code = kOk;
  try {
    const BathParams init = rc.initial_bath ? *rc.initial_bath : default_initial_bath(rc.dmft);
    const auto sol = dmft_loop(rc.dmft, init, SolverOptions{}, [](const DmftIteration& it) {
      spdlog::info("iteration {:3d}: n_loc = {:.10f}, delta change = {:.3e}", it.iteration, it.n_loc, it.delta_change);
    });
    manifest.outputs = write_point(dir, sol, opt.plots);
    manifest.status = sol.converged ? "converged" : "not_converged";
    spdlog::info("{} after {} iterations: n_loc = {:.12f}", manifest.status, sol.iterations, sol.observables.n_loc);
    code = sol.converged ? kOk : kNotConverged;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    manifest.status = std::string("failed: ") + e.what();
    code = kFailed;
  }
  manifest.finished = std::chrono::system_clock::now();
  write_manifest(dir, manifest);
  return code;
}

std::string point_dir_name(double J, double gamma2) { return fmt::format("J_{:g}/gamma2_{:g}", J, gamma2); }

int run_sweep(const Options& opt) {
  RunConfig rc = load(opt);
  if (rc.sweep.gamma2.empty()) throw ConfigError("sweep.gamma2", "required for the sweep command");
  const std::vector<double> J_list = rc.sweep.J.empty() ? std::vector<double>{rc.dmft.lattice.J} : rc.sweep.J;
  const fs::path dir = opt.out;
  prepare_output_dir(dir);

  RunManifest manifest;
  manifest.command = "sweep";
  manifest.config = to_json(rc);
  manifest.seed = rc.dmft.seed;
  manifest.started = std::chrono::system_clock::now();

  auto point_done = [&](std::size_t j, const SweepPoint& p) {
    const fs::path pdir = dir / point_dir_name(J_list[j], p.gamma2);
    fs::create_directories(pdir);
    RunManifest pm;
    RunConfig prc = rc;
    prc.dmft.lattice.J = J_list[j];
    prc.dmft.impurity.Gamma2 = p.gamma2;
    prc.sweep = SweepSpec{};
    pm.command = "sweep-point";
    pm.config = to_json(prc);
    pm.seed = rc.dmft.seed;
    pm.started = manifest.started;
    if (p.error.empty()) {
      pm.outputs = write_point(pdir, p.solution, opt.plots);
      pm.status = p.converged ? "converged" : "not_converged";
    } else {
      pm.status = "failed: " + p.error;
    }
    pm.finished = std::chrono::system_clock::now();
    write_manifest(pdir, pm);
    spdlog::info("J = {}, Gamma2 = {}: {} (n_loc = {:.10f})", J_list[j], p.gamma2, pm.status, p.n_loc);
  };

  if (rc.initial_bath) spdlog::warn("bath.initial is ignored by sweeps; each chain starts from the default bath");
  SweepOptions sweep_options;
  sweep_options.presolve_cutoffs = rc.sweep.presolve_cutoffs;
  const auto sweeps = sweep_zeno_parallel(rc.dmft, J_list, rc.sweep.gamma2, static_cast<std::size_t>(rc.sweep.jobs),
                                          sweep_options, point_done);

  write_text(dir / "aggregate.csv", aggregate_csv(sweeps));
  manifest.outputs = {"aggregate.csv"};
  for (std::size_t j = 0; j < sweeps.size(); ++j)
    for (const auto& p : sweeps[j].points) manifest.outputs.push_back(point_dir_name(J_list[j], p.gamma2));
  if (opt.plots) {
    std::vector<PlotSeries> nloc, g111;
    for (const auto& sw : sweeps) {
      PlotSeries a{fmt::format("J = {:g}", sw.J), {}, {}}, b = a;
      for (const auto& p : sw.points) {
        a.x.push_back(p.gamma2 / sw.U);
        a.y.push_back(p.n_loc_normalized);
        b.x.push_back(p.gamma2 / sw.U);
        b.y.push_back(p.gamma111_eff);
      }
      nloc.push_back(std::move(a));
      g111.push_back(std::move(b));
    }
    write_text(dir / "sweep_nloc.svg", svg_line_plot("normalized n_loc", "Gamma2 / U", nloc));
    write_text(dir / "sweep_gamma111.svg", svg_line_plot("Gamma111_eff", "Gamma2 / U", g111));
    manifest.outputs.emplace_back("sweep_nloc.svg");
    manifest.outputs.emplace_back("sweep_gamma111.svg");
  }

  bool all_ok = true, any_failed = false;
  for (const auto& sw : sweeps)
    for (const auto& p : sw.points) {
      all_ok = all_ok && p.converged;
      any_failed = any_failed || !p.error.empty();
    }
  manifest.status = any_failed ? "partial_failure" : (all_ok ? "converged" : "not_converged");
  manifest.finished = std::chrono::system_clock::now();
  write_manifest(dir, manifest);
  return any_failed ? kFailed : (all_ok ? kOk : kNotConverged);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Driven-dissipative Bose-Hubbard DMFT with a Lindblad ED impurity solver"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--seed", opt.seed, "override the configuration seed");
    sub->add_flag("--plots", opt.plots, "also write SVG line plots");
  };
  auto* run = app.add_subcommand("run", "single DMFT solution");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "Gamma2 sweep (optionally several J values in parallel)");
  add_common(sweep);
  sweep->add_option("--jobs", opt.jobs, "worker threads for independent J chains")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return run_single(opt);
    return run_sweep(opt);
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailed;
  }
}
