#include "ead/rollout.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "ead/objectives.hpp"

namespace ead {

namespace {

// `cursor` has consumed the prompt.
Rollout decode(PolicyCursor cursor, const TaskInstance& instance, const Schedule& schedule, double d,
               std::size_t max_len, RandomStream& rng, const DecodeObserver& observer) {
  if (max_len == 0) throw std::invalid_argument("generate: max_len must be >= 1");
  Rollout out;
  out.prompt = instance.prompt;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto logit = cursor.logits();
    const double tau = temperature_at(schedule, t, d);
    const TokenDistribution target = softmax_at(logit, 1.0);
    const TokenDistribution behavior = tau == 1.0 ? target : softmax_at(logit, tau);
    const auto token = static_cast<Token>(sample(behavior, rng));
    if (observer) observer(DecodeStep{t, target, behavior, token});

    out.tokens.push_back(token);
    out.temperatures.push_back(tau);
    out.behavior_logprobs.push_back(behavior.log_probs[static_cast<std::size_t>(token)]);
    out.target_logprobs.push_back(target.log_probs[static_cast<std::size_t>(token)]);
    if (token == vocab::kEos) {
      out.terminated = true;
      break;
    }
    if (t + 1 < max_len) cursor.feed(token);
  }
  const Verdict verdict = verify(instance, out.tokens);
  out.reward = verdict.reward;
  out.answer = verdict.answer;
  return out;
}

}  // namespace

Rollout generate(const PolicyParams& params, const TaskInstance& instance,
                 const Schedule& schedule, double d, std::size_t max_len, RandomStream& rng,
                 const DecodeObserver& observer) {
  PolicyCursor cursor(params);
  cursor.feed(instance.prompt);
  return decode(cursor, instance, schedule, d, max_len, rng, observer);
}

RolloutGroup generate_group(const PolicyParams& params, const TaskInstance& instance,
                            const Schedule& schedule, double d, std::size_t group_size,
                            std::size_t max_len, const StreamKey& key, double std_floor,
                            const DecodeObserver& observer) {
  if (group_size == 0) throw std::invalid_argument("generate_group: group size must be >= 1");
  RolloutGroup group;
  group.instance = instance;
  group.rollouts.reserve(group_size);
  std::vector<double> rewards;
  rewards.reserve(group_size);
  PolicyCursor cursor(params);
  cursor.feed(instance.prompt);
  for (std::size_t i = 0; i < group_size; ++i) {
    RandomStream rng = key.stream(i);
    group.rollouts.push_back(decode(cursor, instance, schedule, d, max_len, rng, observer));
    rewards.push_back(group.rollouts.back().reward);
  }
  group.advantages = normalize_advantages(rewards, std_floor);
  return group;
}

std::vector<Rollout> fork_generate(const PolicyParams& params, const TaskInstance& instance,
                                   const Rollout& base, std::size_t branch_pos, std::size_t k,
                                   double tau_branch, std::size_t max_len, const StreamKey& key) {
  if (branch_pos > base.tokens.size()) {
    throw std::invalid_argument("fork_generate: branch position beyond the base rollout");
  }
  if (!(tau_branch > 0.0)) throw std::invalid_argument("fork_generate: tau_branch must be > 0");
  const bool base_finished = base.terminated || base.tokens.size() >= max_len;

  std::vector<Rollout> branches;
  branches.reserve(k);
  for (std::size_t b = 0; b < k; ++b) {
    if (branch_pos == base.tokens.size() && base_finished) {
      branches.push_back(base);
      continue;
    }
    Rollout out;
    out.prompt = base.prompt;
    out.tokens.assign(base.tokens.begin(), base.tokens.begin() + static_cast<std::ptrdiff_t>(branch_pos));
    out.temperatures.assign(base.temperatures.begin(),
                            base.temperatures.begin() + static_cast<std::ptrdiff_t>(branch_pos));
    out.behavior_logprobs.assign(base.behavior_logprobs.begin(),
                                 base.behavior_logprobs.begin() + static_cast<std::ptrdiff_t>(branch_pos));
    out.target_logprobs.assign(base.target_logprobs.begin(),
                               base.target_logprobs.begin() + static_cast<std::ptrdiff_t>(branch_pos));

    RandomStream rng = key.stream(b);
    PolicyCursor cursor(params);
    cursor.feed(base.prompt);
    cursor.feed(std::span<const Token>(out.tokens));
    for (std::size_t t = branch_pos; t < max_len; ++t) {
      const auto logit = cursor.logits();
      const TokenDistribution target = softmax_at(logit, 1.0);
      const TokenDistribution behavior = tau_branch == 1.0 ? target : softmax_at(logit, tau_branch);
      const auto token = static_cast<Token>(sample(behavior, rng));
      out.tokens.push_back(token);
      out.temperatures.push_back(tau_branch);
      out.behavior_logprobs.push_back(behavior.log_probs[static_cast<std::size_t>(token)]);
      out.target_logprobs.push_back(target.log_probs[static_cast<std::size_t>(token)]);
      if (token == vocab::kEos) {
        out.terminated = true;
        break;
      }
      if (t + 1 < max_len) cursor.feed(token);
    }
    const Verdict verdict = verify(instance, out.tokens);
    out.reward = verdict.reward;
    out.answer = verdict.answer;
    branches.push_back(std::move(out));
  }
  return branches;
}

std::string to_jsonl(const Rollout& rollout, std::int64_t step) {
  nlohmann::ordered_json j;
  if (step >= 0) j["step"] = step;
  j["prompt"] = rollout.prompt;
  j["tokens"] = rollout.tokens;
  j["temperatures"] = rollout.temperatures;
  j["behavior_logprobs"] = rollout.behavior_logprobs;
  j["target_logprobs"] = rollout.target_logprobs;
  j["reward"] = rollout.reward;
  j["terminated"] = rollout.terminated;
  j["answer"] = rollout.answer;
  return j.dump();
}

Rollout rollout_from_jsonl(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Rollout r;
  j.at("prompt").get_to(r.prompt);
  j.at("tokens").get_to(r.tokens);
  j.at("temperatures").get_to(r.temperatures);
  j.at("behavior_logprobs").get_to(r.behavior_logprobs);
  j.at("target_logprobs").get_to(r.target_logprobs);
  j.at("reward").get_to(r.reward);
  j.at("terminated").get_to(r.terminated);
  j.at("answer").get_to(r.answer);
  const std::size_t n = r.tokens.size();
  if (r.temperatures.size() != n || r.behavior_logprobs.size() != n || r.target_logprobs.size() != n) {
    throw std::invalid_argument("rollout record: per-token tracks differ in length");
  }
  return r;
}

}  // namespace ead
