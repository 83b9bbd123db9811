#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ead/distribution.hpp"
#include "ead/policy.hpp"
#include "ead/random.hpp"
#include "ead/schedule.hpp"
#include "ead/tasks.hpp"

namespace ead {

/// One sampled response with both log-probability tracks:
///  behavior: log pi_old(y_t | ...; tau_t), the distribution actually sampled
///  target:   log pi_old(y_t | ...; 1), the policy being optimized
struct Rollout {
  TokenSequence prompt;
  TokenSequence tokens;
  std::vector<double> temperatures;
  std::vector<double> behavior_logprobs;
  std::vector<double> target_logprobs;
  double reward = 0.0;
  bool terminated = false;  // ended with EOS
  std::string answer;

  std::size_t length() const { return tokens.size(); }
};

struct RolloutGroup {
  TaskInstance instance;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

/// Identifies a family of rollout streams; rollout i of the family draws from
/// RandomStream::derive(seed, {domain, step, prompt, i}).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t domain = 0;
  std::uint64_t step = 0;
  std::uint64_t prompt = 0;

  RandomStream stream(std::uint64_t index) const {
    return RandomStream::derive(seed, {domain, step, prompt, index});
  }
};

/// Per-token hook for measurements taken during decoding.
struct DecodeStep {
  std::size_t position;
  const TokenDistribution& target;
  const TokenDistribution& behavior;
  Token sampled;
};
using DecodeObserver = std::function<void(const DecodeStep&)>;

inline constexpr std::size_t kDefaultMaxLen = 32;
inline constexpr double kDefaultStdFloor = 1e-6;

/// Samples y_t ~ softmax(logits / tau_t) until EOS or max_len tokens.
Rollout generate(const PolicyParams& params, const TaskInstance& instance,
                 const Schedule& schedule, double d, std::size_t max_len, RandomStream& rng,
                 const DecodeObserver& observer = {});

/// G rollouts on independent streams key.stream(0..G-1), with normalized
/// advantages. G = 1 yields advantage 0.
RolloutGroup generate_group(const PolicyParams& params, const TaskInstance& instance,
                            const Schedule& schedule, double d, std::size_t group_size,
                            std::size_t max_len, const StreamKey& key,
                            double std_floor = kDefaultStdFloor,
                            const DecodeObserver& observer = {});

/// k continuations that copy `base` up to `branch_pos` and then sample at the
/// fixed temperature `tau_branch`. A branch point at the end of an EOS-
/// terminated (or max_len) base reproduces the base k times.
std::vector<Rollout> fork_generate(const PolicyParams& params, const TaskInstance& instance,
                                   const Rollout& base, std::size_t branch_pos, std::size_t k,
                                   double tau_branch, std::size_t max_len, const StreamKey& key);

/// One JSON object per line: prompt, tokens, temperatures, both log-prob
/// tracks, reward, terminated, answer (and step when step >= 0).
std::string to_jsonl(const Rollout& rollout, std::int64_t step = -1);
Rollout rollout_from_jsonl(std::string_view line);

}  // namespace ead
