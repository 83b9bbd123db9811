#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "ead/objectives.hpp"
#include "ead/policy.hpp"
#include "ead/schedule.hpp"
#include "ead/tasks.hpp"

namespace ead {

struct EvalConfig {
  std::size_t every = 25;  // 0: final step only
  std::size_t samples = 16;
  std::size_t prompts = 64;
  Schedule schedule = FixedSchedule{1.0};
  std::size_t rollout_log = 16;  // eval rollouts written to rollouts.jsonl per eval step
};

/// Everything a run depends on. Serialized with every default materialized,
/// so config.resolved.json fully describes the run.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  TaskMixture tasks;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  double init_scale = 0.08;
  std::optional<double> readout_init_scale;  // w_out and b_out; init_scale when unset
  Schedule schedule = AnnealSchedule{};
  ObjectiveConfig objective;
  std::size_t group_size = 8;
  std::size_t prompts_per_step = 64;
  std::size_t mini_batches = 1;
  double learning_rate = 1e-3;
  std::size_t steps = 500;
  std::size_t max_len = kDefaultMaxLen;
  EvalConfig eval;
  std::size_t checkpoint_every = 0;  // 0: initial and final checkpoints only
  std::size_t workers = 1;
  std::string output_dir = "runs/default";

  PolicyDims dims() const { return {vocab::kSize, embed, hidden}; }
  void validate() const;
};

nlohmann::ordered_json schedule_to_json(const Schedule& schedule);
Schedule schedule_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace ead
