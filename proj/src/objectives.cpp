#include "ead/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ead {

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kDapo: return "dapo";
    case ObjectiveKind::kGrpo: return "grpo";
    case ObjectiveKind::kPg: return "pg";
  }
  return "unknown";
}

std::string_view to_string(TisMode mode) {
  switch (mode) {
    case TisMode::kOff: return "off";
    case TisMode::kPerToken: return "per_token";
    case TisMode::kPerSequence: return "per_sequence";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  if (name == "dapo") return ObjectiveKind::kDapo;
  if (name == "grpo") return ObjectiveKind::kGrpo;
  if (name == "pg") return ObjectiveKind::kPg;
  throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
}

TisMode parse_tis_mode(std::string_view name) {
  if (name == "off") return TisMode::kOff;
  if (name == "per_token") return TisMode::kPerToken;
  if (name == "per_sequence") return TisMode::kPerSequence;
  throw std::invalid_argument("unknown tis_mode '" + std::string(name) + "'");
}

void ObjectiveConfig::validate() const {
  if (!(eps_low >= 0.0) || !(eps_high >= 0.0)) throw std::invalid_argument("objective: clip bounds must be >= 0");
  if (!(tis_cap > 0.0)) throw std::invalid_argument("objective: tis_cap must be > 0");
  if (!(kl_coeff >= 0.0)) throw std::invalid_argument("objective: kl_coeff must be >= 0");
  if (!(std_floor >= 0.0)) throw std::invalid_argument("objective: std_floor must be >= 0");
}

std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor) {
  const std::size_t n = rewards.size();
  std::vector<double> adv(n, 0.0);
  if (n == 0) return adv;
  const bool constant =
      std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (constant) return adv;

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(n));
  const double denom = std::max(std_dev, std_floor);
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

std::vector<double> current_logprobs(const PolicyParams& params, const Rollout& rollout) {
  return token_logprobs(params, rollout.prompt, rollout.tokens);
}

double token_ratio(const Rollout& rollout, const PolicyParams& params, std::size_t t) {
  if (t >= rollout.tokens.size()) throw std::out_of_range("token_ratio: position beyond the rollout");
  const auto lp = current_logprobs(params, rollout);
  return std::exp(lp[t] - rollout.target_logprobs[t]);
}

std::vector<double> tis_weight(const Rollout& rollout, TisMode mode, double cap) {
  const std::size_t n = rollout.tokens.size();
  std::vector<double> w(n, 1.0);
  switch (mode) {
    case TisMode::kOff:
      break;
    case TisMode::kPerToken:
      for (std::size_t t = 0; t < n; ++t) {
        w[t] = std::min(std::exp(rollout.target_logprobs[t] - rollout.behavior_logprobs[t]), cap);
      }
      break;
    case TisMode::kPerSequence: {
      double log_ratio = 0.0;
      for (std::size_t t = 0; t < n; ++t) log_ratio += rollout.target_logprobs[t] - rollout.behavior_logprobs[t];
      const double weight = std::isfinite(cap) && log_ratio >= std::log(cap) ? cap : std::exp(log_ratio);
      std::fill(w.begin(), w.end(), weight);
      break;
    }
  }
  return w;
}

namespace {

struct FlatBatch {
  std::vector<const Rollout*> rollouts;
  std::vector<double> advantages;
  std::size_t tokens = 0;
};

FlatBatch flatten(std::span<const RolloutGroup> groups) {
  FlatBatch flat;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.rollouts.size()) {
      throw std::invalid_argument("rollout group: advantages not normalized");
    }
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      flat.rollouts.push_back(&g.rollouts[i]);
      flat.advantages.push_back(g.advantages[i]);
      flat.tokens += g.rollouts[i].tokens.size();
    }
  }
  if (flat.rollouts.empty() || flat.tokens == 0) throw std::invalid_argument("loss: empty batch");
  return flat;
}

std::vector<std::vector<double>> batch_logprobs(const PolicyParams& params, const FlatBatch& flat,
                                                const WorkerPool& pool) {
  // one prompt pass per run of rollouts sharing a prompt
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < flat.rollouts.size(); ++i) {
    if (i == 0 || flat.rollouts[i]->prompt != flat.rollouts[i - 1]->prompt) starts.push_back(i);
  }
  starts.push_back(flat.rollouts.size());
  std::vector<std::vector<double>> out(flat.rollouts.size());
  pool.parallel_for(starts.size() - 1, [&](std::size_t r) {
    PolicyCursor cursor(params);
    cursor.feed(flat.rollouts[starts[r]]->prompt);
    for (std::size_t i = starts[r]; i < starts[r + 1]; ++i) out[i] = token_logprobs(cursor, flat.rollouts[i]->tokens);
  });
  return out;
}

// Shared token loop for the clipped objectives. `scale_of(i)` is the
// aggregation weight of rollout i's tokens.
template <typename ScaleFn>
LossResult clipped_loss(const FlatBatch& flat, const std::vector<std::vector<double>>& logprobs,
                        const ObjectiveConfig& cfg, double eps_low, double eps_high, bool clip,
                        ScaleFn scale_of) {
  LossResult result;
  LossReport& rep = result.report;
  rep.tokens = flat.tokens;
  rep.max_ratio = 0.0;
  std::size_t clipped_tokens = 0;
  double ratio_sum = 0.0;
  double tis_sum = 0.0;
  result.graph.reserve(flat.rollouts.size());

  for (std::size_t i = 0; i < flat.rollouts.size(); ++i) {
    const Rollout& r = *flat.rollouts[i];
    const double adv = flat.advantages[i];
    const double scale = scale_of(i);
    const auto tis = tis_weight(r, cfg.tis_mode, cfg.tis_cap);
    WeightedSequence term{r.prompt, r.tokens, std::vector<double>(r.tokens.size(), 0.0), {}};
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const double ratio = std::exp(logprobs[i][t] - r.target_logprobs[t]);
      const double unclipped = ratio * adv;
      double objective = unclipped;
      bool clipped_active = false;
      if (clip) {
        const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high) * adv;
        if (clipped < unclipped) {
          objective = clipped;
          clipped_active = true;
        }
      }
      rep.loss -= scale * tis[t] * objective;
      // d(ratio)/d(log pi) = ratio; the active clipped branch is flat in theta.
      term.weights[t] = clipped_active ? 0.0 : -scale * tis[t] * ratio * adv;

      clipped_tokens += clipped_active ? 1 : 0;
      ratio_sum += ratio;
      rep.max_ratio = std::max(rep.max_ratio, ratio);
      tis_sum += tis[t];
      rep.max_offpolicy_ratio =
          std::max(rep.max_offpolicy_ratio, std::exp(r.target_logprobs[t] - r.behavior_logprobs[t]));
    }
    result.graph.push_back(std::move(term));
  }
  const auto n = static_cast<double>(flat.tokens);
  rep.clip_fraction = static_cast<double>(clipped_tokens) / n;
  rep.mean_ratio = ratio_sum / n;
  rep.mean_tis_weight = tis_sum / n;
  return result;
}

}  // namespace

LossResult dapo_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                     const ObjectiveConfig& cfg, const WorkerPool& pool) {
  cfg.validate();
  const FlatBatch flat = flatten(groups);
  const auto lp = batch_logprobs(params, flat, pool);
  const double scale = 1.0 / static_cast<double>(flat.tokens);
  return clipped_loss(flat, lp, cfg, cfg.eps_low, cfg.eps_high, true, [&](std::size_t) { return scale; });
}

LossResult grpo_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                     const PolicyParams& params_ref, const ObjectiveConfig& cfg,
                     const WorkerPool& pool) {
  cfg.validate();
  const FlatBatch flat = flatten(groups);
  const auto lp = batch_logprobs(params, flat, pool);
  const double per_rollout = 1.0 / static_cast<double>(flat.rollouts.size());
  auto scale_of = [&](std::size_t i) {
    const std::size_t len = flat.rollouts[i]->tokens.size();
    return len == 0 ? 0.0 : per_rollout / static_cast<double>(len);
  };
  LossResult result = clipped_loss(flat, lp, cfg, cfg.eps_low, cfg.eps_low, true, scale_of);

  const auto ref_lp = batch_logprobs(params_ref, flat, pool);
  double kl_sum = 0.0;
  for (std::size_t i = 0; i < flat.rollouts.size(); ++i) {
    const double scale = scale_of(i);
    auto& weights = result.graph[i].weights;
    for (std::size_t t = 0; t < weights.size(); ++t) {
      const double log_rho = ref_lp[i][t] - lp[i][t];
      const double rho = std::exp(log_rho);
      const double k3 = rho - log_rho - 1.0;
      kl_sum += k3;
      result.report.loss += cfg.kl_coeff * scale * k3;
      // d k3 / d log pi_theta = 1 - rho
      weights[t] += cfg.kl_coeff * scale * (1.0 - rho);
    }
  }
  result.report.kl = kl_sum / static_cast<double>(flat.tokens);
  return result;
}

LossResult pg_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                   const ObjectiveConfig& cfg, const WorkerPool& pool) {
  cfg.validate();
  const FlatBatch flat = flatten(groups);
  const auto lp = batch_logprobs(params, flat, pool);
  const double scale = 1.0 / static_cast<double>(flat.tokens);
  return clipped_loss(flat, lp, cfg, 0.0, 0.0, false, [&](std::size_t) { return scale; });
}

LossResult compute_loss(std::span<const RolloutGroup> groups, const PolicyParams& params,
                        const PolicyParams& params_ref, const ObjectiveConfig& cfg,
                        const WorkerPool& pool) {
  switch (cfg.kind) {
    case ObjectiveKind::kDapo: return dapo_loss(groups, params, cfg, pool);
    case ObjectiveKind::kGrpo: return grpo_loss(groups, params, params_ref, cfg, pool);
    case ObjectiveKind::kPg: return pg_loss(groups, params, cfg, pool);
  }
  throw std::invalid_argument("compute_loss: unknown objective");
}

Gradients loss_gradients(const PolicyParams& params, LossResult& result, const WorkerPool& pool) {
  // Fixed-size blocks make the summation order independent of the pool size.
  constexpr std::size_t kBlock = 16;
  const std::size_t n = result.graph.size();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<Gradients> partial(blocks, Gradients(params.dims));
  pool.parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    accumulate_runs(params, std::span<const WeightedSequence>(result.graph).subspan(b * kBlock, end - b * kBlock),
                    partial[b]);
  });
  Gradients total(params.dims);
  for (const auto& g : partial) total.add(g);
  result.report.grad_norm = total.norm();
  return total;
}

std::vector<RolloutGroup> filter_informative(std::span<const RolloutGroup> groups) {
  std::vector<RolloutGroup> kept;
  for (const auto& g : groups) {
    std::size_t correct = 0;
    for (const auto& r : g.rollouts) correct += r.reward > 0.0 ? 1 : 0;
    if (correct > 0 && correct < g.rollouts.size()) kept.push_back(g);
  }
  return kept;
}

}  // namespace ead
