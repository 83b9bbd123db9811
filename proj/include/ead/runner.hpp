#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ead/config.hpp"
#include "ead/metrics.hpp"
#include "ead/parallel.hpp"
#include "ead/policy.hpp"

namespace ead {

/// One metrics.csv row: column name -> formatted cell. Missing columns are
/// written as empty cells.
using MetricsRow = std::map<std::string, std::string>;

/// Column order of metrics.csv for a config.
std::vector<std::string> metrics_columns(const ExperimentConfig& cfg);

/// Formats doubles with 17 significant digits so identical values give
/// identical bytes.
std::string format_number(double x);

/// Six significant digits, for labels and headers.
std::string format_short(double x);

/// Thrown when a loss or gradient goes non-finite. The run directory gets a
/// failure.json describing the step before this propagates.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t step, const std::string& reason)
      : std::runtime_error("training aborted at step " + std::to_string(step) + ": " + reason), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRow> rows;
};

/// Runs the full step loop. When `out_dir` is set it receives metrics.csv,
/// rollouts.jsonl, checkpoint_<step>.bin and config.resolved.json.
TrainResult train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir);

/// Held-out prompts shared by every evaluation of a config.
std::vector<TaskInstance> eval_prompts(const ExperimentConfig& cfg);

/// Evaluation columns (pass@k, worst@16, maj@N, entropies) for `params`.
MetricsRow evaluate(const PolicyParams& params, const ExperimentConfig& cfg, std::size_t step,
                    const WorkerPool& pool = WorkerPool{});

struct ForkRow {
  std::size_t position = 0;
  double majority = 0.0;          // maj@k over the k branches
  double mean_distinct = 0.0;     // distinct answers among the branches
  double mean_reward = 0.0;
  std::size_t branched = 0;       // prompts whose base reached this position
};

/// For each eval prompt, samples one base response with the eval schedule and
/// forks k continuations at each requested position (clamped to the base
/// length) at temperature tau_branch.
std::vector<ForkRow> run_fork_experiment(const PolicyParams& params, const ExperimentConfig& cfg,
                                         const std::vector<std::size_t>& positions, std::size_t k,
                                         double tau_branch = 1.0, const WorkerPool& pool = WorkerPool{});

struct ScalingRow {
  std::string schedule;
  std::size_t n = 0;
  double majority = 0.0;
  double pass = 0.0;
};

/// maj@N and pass@N per decoding schedule on the eval prompts. All schedules
/// share the same random streams; annealed schedules decode with d = d0.
std::vector<ScalingRow> run_inference_scaling(const PolicyParams& params, const ExperimentConfig& cfg,
                                              const std::vector<std::size_t>& ns,
                                              const std::vector<std::pair<std::string, Schedule>>& schedules,
                                              const WorkerPool& pool = WorkerPool{});

/// CSV with a `t` column and one temperature column per decay rate.
std::string dump_schedule(const ExperimentConfig& cfg, const std::vector<double>& decay_rates,
                          std::size_t horizon);

/// Step-aligned merge of metrics.csv files; every metric column is suffixed
/// with ":<run name>". Throws if a directory or its metrics.csv is missing, or
/// if the runs evaluated at different steps.
std::string compare_runs(const std::vector<std::filesystem::path>& run_dirs);

std::string fork_csv(const std::vector<ForkRow>& rows, std::size_t k);
std::string scaling_csv(const std::vector<ScalingRow>& rows);

/// Minimal RFC 4180 reader used by compare_runs and the tests.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace ead
