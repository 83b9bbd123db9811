#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ead/parallel.hpp"
#include "ead/policy.hpp"
#include "ead/rollout.hpp"
#include "ead/schedule.hpp"
#include "ead/tasks.hpp"

namespace ead {

/// n sampled responses for one prompt, in sampling order.
struct PromptSamples {
  std::vector<bool> correct;
  std::vector<std::string> answers;

  std::size_t size() const { return correct.size(); }
  std::size_t correct_count() const;
};

using EvalBatch = std::vector<PromptSamples>;

/// Mean over prompts of 1 - C(n - c, k) / C(n, k). Throws std::invalid_argument
/// if k is 0 or exceeds any prompt's sample count.
double pass_at_k(const EvalBatch& batch, std::size_t k);

/// Mean over prompts of C(c, k) / C(n, k): all k draws correct.
double worst_at_k(const EvalBatch& batch, std::size_t k);

/// Plurality vote over the first N answers of each prompt. Ties go to the
/// tied answer that was sampled first; the invalid marker votes but never wins
/// a correct verdict.
double majority_at_n(const EvalBatch& batch, std::size_t n);

/// Per-position token entropies (nats) of the tau = 1 target policy and of the
/// sampler actually used, collected along sampled prefixes.
struct EntropyProfile {
  std::vector<double> target;    // mean target entropy at position t
  std::vector<double> behavior;  // mean behavior entropy at position t
  std::vector<std::size_t> counts;
  double average_target = 0.0;    // prompt-averaged, token-weighted within prompt
  double average_behavior = 0.0;
};

/// Samples `samples` rollouts per prompt under `schedule` and measures the
/// entropy of the distributions met at each generated position.
EntropyProfile entropy_profile(const PolicyParams& params, std::span<const TaskInstance> prompts,
                               const Schedule& schedule, double d, std::size_t samples,
                               std::size_t max_len, const StreamKey& key,
                               const WorkerPool& pool = WorkerPool{});

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct EvalResult {
  EvalBatch batch;
  EntropyProfile entropy;
  double mean_length = 0.0;
};

/// Samples `samples` rollouts for each prompt (prompt p draws from streams
/// with key.prompt = p) and records both outcomes and entropies in one pass.
EvalResult evaluate_prompts(const PolicyParams& params, std::span<const TaskInstance> prompts,
                            const Schedule& schedule, double d, std::size_t samples,
                            std::size_t max_len, const StreamKey& key,
                            const WorkerPool& pool = WorkerPool{});

}  // namespace ead
