#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "ead/parallel.hpp"
#include "ead/policy.hpp"
#include "ead/rollout.hpp"

namespace ead {

enum class ObjectiveKind { kDapo, kGrpo, kPg };
enum class TisMode { kOff, kPerToken, kPerSequence };

std::string_view to_string(ObjectiveKind kind);
std::string_view to_string(TisMode mode);
ObjectiveKind parse_objective_kind(std::string_view name);
TisMode parse_tis_mode(std::string_view name);

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kDapo;
  double eps_low = 0.2;
  double eps_high = 0.28;  // GRPO clips symmetrically with eps_low
  TisMode tis_mode = TisMode::kPerToken;
  double tis_cap = 2.0;  // may be +infinity
  double kl_coeff = 0.0;  // GRPO only
  double std_floor = kDefaultStdFloor;
  bool dynamic_sampling = false;  // keep only groups with 0 < #correct < G

  void validate() const;
};

/// Diagnostics of one loss evaluation. `grad_norm` is filled once gradients
/// have been accumulated.
struct LossReport {
  double loss = 0.0;
  double clip_fraction = 0.0;  // tokens whose clipped branch is the active minimum
  double mean_ratio = 0.0;     // r_t = pi_theta / pi_old over tokens
  double max_ratio = 0.0;
  double mean_tis_weight = 1.0;
  double max_offpolicy_ratio = 0.0;  // untruncated pi_old / pi_behavior per token
  double kl = 0.0;                   // mean k3 estimate (GRPO)
  double grad_norm = 0.0;
  std::size_t tokens = 0;
};

struct LossResult {
  LossReport report;
  LossGraph graph;  // d loss / d log pi_theta(y_t) per token
};

/// A_i = (R_i - mean) / max(std, std_floor) with the population std; all
/// zeros when the rewards are constant.
std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor);

/// Log-probabilities of the rollout's tokens under `params` at tau = 1.
std::vector<double> current_logprobs(const PolicyParams& params, const Rollout& rollout);

/// r_t = exp(log pi_theta(y_t) - stored target log-prob).
double token_ratio(const Rollout& rollout, const PolicyParams& params, std::size_t t);

/// Truncated importance weights correcting behavior -> target, one per token.
/// per_sequence repeats min(prod_t pi_old / pi_behavior, cap) on every token.
std::vector<double> tis_weight(const Rollout& rollout, TisMode mode, double cap);

/// Negative clipped objective with decoupled bounds, normalized by the total
/// token count of the batch. TIS weights multiply each token term.
LossResult dapo_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                     const ObjectiveConfig& cfg, const WorkerPool& pool = WorkerPool{});

/// Symmetric clip (eps_low on both sides), per-rollout length normalization
/// averaged over rollouts, plus kl_coeff times the k3 estimator
/// rho - log rho - 1 with rho = pi_ref / pi_theta at the sampled tokens.
LossResult grpo_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                     const PolicyParams& params_ref, const ObjectiveConfig& cfg,
                     const WorkerPool& pool = WorkerPool{});

/// -sum_t w_t r_t A / N, the importance-corrected vanilla policy gradient.
LossResult pg_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                   const ObjectiveConfig& cfg, const WorkerPool& pool = WorkerPool{});

/// Dispatches on cfg.kind. `params_ref` is only read by GRPO.
LossResult compute_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                        const PolicyParams& params_ref, const ObjectiveConfig& cfg,
                        const WorkerPool& pool = WorkerPool{});

/// Backpropagates the loss graph (sequences spread over the pool, summed in
/// index order) and records the gradient norm in `result.report`.
Gradients loss_gradients(const PolicyParams& params, LossResult& result,
                         const WorkerPool& pool = WorkerPool{});

/// Dynamic-sampling filter: groups whose rewards are not all equal.
std::vector<RolloutGroup> filter_informative(std::span<const RolloutGroup> groups);

}  // namespace ead
