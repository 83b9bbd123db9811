// ead: command-line front end for training runs and the decoding experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ead/config.hpp"
#include "ead/policy.hpp"
#include "ead/runner.hpp"

namespace fs = std::filesystem;

namespace {

ead::ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ead::ExperimentConfig{} : ead::load_config(path);
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream file(out, std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + out);
  file << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annealed-temperature decoding laboratory for RL with verifiable rewards"};
  app.require_subcommand(1);

  std::string config_path;
  std::string ckpt_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> steps;

  auto* train = app.add_subcommand("train", "Train a policy and write a run directory");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out, "Run directory (default: output_dir from the config)");
  train->add_option("--workers", workers, "Override the worker count");
  train->add_option("--steps", steps, "Override the number of optimizer steps");

  std::size_t eval_step = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the config's eval prompts");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required();
  eval->add_option("--step", eval_step, "Step index used for the eval random streams");
  eval->add_option("--out", out, "Write CSV here instead of stdout");

  std::vector<double> decay_rates{10, 25, 40000};
  std::size_t horizon = 200;
  auto* schedule = app.add_subcommand("schedule", "Dump temperature curves for several decay rates");
  schedule->add_option("--config", config_path, "Experiment config (JSON)");
  schedule->add_option("--d", decay_rates, "Decay rates")->delimiter(',');
  schedule->add_option("--horizon", horizon, "Number of generated positions");
  schedule->add_option("--out", out, "Write CSV here instead of stdout");

  std::vector<std::size_t> positions{0, 1, 2, 3};
  std::size_t fork_k = 8;
  double tau_branch = 1.0;
  auto* fork = app.add_subcommand("fork", "Branch continuations at different positions");
  fork->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  fork->add_option("--config", config_path, "Experiment config (JSON)");
  fork->add_option("--positions", positions, "Branch positions")->delimiter(',');
  fork->add_option("--k", fork_k, "Branches per position");
  fork->add_option("--tau", tau_branch, "Branch sampling temperature");
  fork->add_option("--out", out, "Write CSV here instead of stdout");

  std::vector<std::size_t> ns{1, 2, 4, 8, 16};
  std::vector<double> taus{0.6, 1.0, 1.2};
  auto* scale = app.add_subcommand("scale", "Majority-vote scaling per decoding schedule");
  scale->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  scale->add_option("--config", config_path, "Experiment config (JSON); its schedule is the annealed decoder");
  scale->add_option("--n", ns, "Sample counts")->delimiter(',');
  scale->add_option("--taus", taus, "Fixed-temperature baselines")->delimiter(',');
  scale->add_option("--out", out, "Write CSV here instead of stdout");

  std::vector<std::string> run_dirs;
  auto* compare = app.add_subcommand("compare", "Merge metrics.csv of several runs by step");
  compare->add_option("runs", run_dirs, "Run directories")->required();
  compare->add_option("--out", out, "Write CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*train) {
      auto cfg = ead::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (workers) cfg.workers = *workers;
      if (steps) cfg.steps = *steps;
      if (!out.empty()) cfg.output_dir = out;
      cfg.validate();
      const auto result = ead::train(cfg, fs::path(cfg.output_dir));
      std::cerr << "wrote " << result.rows.size() << " rows to " << (fs::path(cfg.output_dir) / "metrics.csv").string()
                << "\n";
    } else if (*eval) {
      const auto cfg = ead::load_config(config_path);
      const auto params = ead::load_checkpoint(ckpt_path);
      const auto row = ead::evaluate(params, cfg, eval_step, ead::WorkerPool(cfg.workers));
      std::string header;
      std::string line;
      for (const auto& col : ead::metrics_columns(cfg)) {
        const auto it = row.find(col);
        if (it == row.end()) continue;
        header += (header.empty() ? "" : ",") + col;
        const bool quote = it->second.find(',') != std::string::npos;
        line += (line.empty() ? "" : ",") + (quote ? "\"" + it->second + "\"" : it->second);
      }
      emit(header + "\n" + line + "\n", out);
    } else if (*schedule) {
      emit(ead::dump_schedule(config_or_default(config_path), decay_rates, horizon), out);
    } else if (*fork) {
      const auto cfg = config_or_default(config_path);
      const auto params = ead::load_checkpoint(ckpt_path);
      const auto rows = ead::run_fork_experiment(params, cfg, positions, fork_k, tau_branch,
                                                 ead::WorkerPool(cfg.workers));
      emit(ead::fork_csv(rows, fork_k), out);
    } else if (*scale) {
      const auto cfg = config_or_default(config_path);
      const auto params = ead::load_checkpoint(ckpt_path);
      std::vector<std::pair<std::string, ead::Schedule>> schedules;
      schedules.emplace_back(std::holds_alternative<ead::AnnealSchedule>(cfg.schedule) ? "ead" : "config",
                             cfg.schedule);
      for (double tau : taus) schedules.emplace_back("tau=" + ead::format_short(tau), ead::FixedSchedule{tau});
      const auto rows = ead::run_inference_scaling(params, cfg, ns, schedules, ead::WorkerPool(cfg.workers));
      emit(ead::scaling_csv(rows), out);
    } else if (*compare) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      emit(ead::compare_runs(dirs), out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
