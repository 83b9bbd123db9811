#include "ead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ead {

std::size_t PromptSamples::correct_count() const {
  return static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
}

namespace {

void check_k(const EvalBatch& batch, std::size_t k, const char* what) {
  if (batch.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  if (k == 0) throw std::invalid_argument(std::string(what) + ": k must be >= 1");
  for (const auto& p : batch) {
    if (k > p.size()) {
      throw std::invalid_argument(std::string(what) + ": k=" + std::to_string(k) +
                                  " exceeds sample count " + std::to_string(p.size()));
    }
  }
}

// C(a, k) / C(n, k) as a product, 0 when a < k.
double choose_ratio(std::size_t a, std::size_t n, std::size_t k) {
  if (a < k) return 0.0;
  double ratio = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    ratio *= static_cast<double>(a - i) / static_cast<double>(n - i);
  }
  return ratio;
}

}  // namespace

double pass_at_k(const EvalBatch& batch, std::size_t k) {
  check_k(batch, k, "pass_at_k");
  double total = 0.0;
  for (const auto& p : batch) total += 1.0 - choose_ratio(p.size() - p.correct_count(), p.size(), k);
  return total / static_cast<double>(batch.size());
}

double worst_at_k(const EvalBatch& batch, std::size_t k) {
  check_k(batch, k, "worst_at_k");
  double total = 0.0;
  for (const auto& p : batch) total += choose_ratio(p.correct_count(), p.size(), k);
  return total / static_cast<double>(batch.size());
}

double majority_at_n(const EvalBatch& batch, std::size_t n) {
  check_k(batch, n, "majority_at_n");
  double total = 0.0;
  for (const auto& p : batch) {
    // answer -> (votes, first index)
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = tally.try_emplace(p.answers[i], 0, i);
      ++it->second.first;
    }
    std::size_t best_votes = 0;
    std::size_t best_first = 0;
    for (const auto& [answer, entry] : tally) {
      if (entry.first > best_votes || (entry.first == best_votes && entry.second < best_first)) {
        best_votes = entry.first;
        best_first = entry.second;
      }
    }
    const bool invalid = p.answers[best_first] == kInvalidAnswer;
    total += !invalid && p.correct[best_first] ? 1.0 : 0.0;
  }
  return total / static_cast<double>(batch.size());
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

struct DecodeRecord {
  std::vector<double> target_entropy;  // indexed by generated position
  std::vector<double> behavior_entropy;
  bool correct = false;
  std::string answer;
};

}  // namespace

EvalResult evaluate_prompts(const PolicyParams& params, std::span<const TaskInstance> prompts,
                            const Schedule& schedule, double d, std::size_t samples,
                            std::size_t max_len, const StreamKey& key, const WorkerPool& pool) {
  if (samples == 0) throw std::invalid_argument("evaluate_prompts: samples must be >= 1");
  // Each prompt fills its own slot; slots are merged in prompt order.
  std::vector<std::vector<DecodeRecord>> records(prompts.size());
  pool.parallel_for(prompts.size(), [&](std::size_t p) {
    StreamKey k = key;
    k.prompt = p;
    records[p].resize(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      RandomStream rng = k.stream(s);
      DecodeRecord& rec = records[p][s];
      const Rollout r = generate(params, prompts[p], schedule, d, max_len, rng, [&](const DecodeStep& step) {
        rec.target_entropy.push_back(token_entropy(step.target));
        rec.behavior_entropy.push_back(token_entropy(step.behavior));
      });
      rec.correct = r.reward > 0.0;
      rec.answer = r.answer;
    }
  });

  EvalResult result;
  EntropyProfile& out = result.entropy;
  double avg_t = 0.0;
  double avg_b = 0.0;
  std::size_t prompts_seen = 0;
  std::size_t total_tokens = 0;
  for (const auto& prompt_records : records) {
    PromptSamples& ps = result.batch.emplace_back();
    double sum_t = 0.0;
    double sum_b = 0.0;
    std::size_t tokens = 0;
    for (const auto& rec : prompt_records) {
      ps.correct.push_back(rec.correct);
      ps.answers.push_back(rec.answer);
      const std::size_t len = rec.target_entropy.size();
      if (len > out.counts.size()) {
        out.counts.resize(len, 0);
        out.target.resize(len, 0.0);
        out.behavior.resize(len, 0.0);
      }
      for (std::size_t t = 0; t < len; ++t) {
        out.target[t] += rec.target_entropy[t];
        out.behavior[t] += rec.behavior_entropy[t];
        ++out.counts[t];
        sum_t += rec.target_entropy[t];
        sum_b += rec.behavior_entropy[t];
      }
      tokens += len;
    }
    total_tokens += tokens;
    if (tokens > 0) {
      avg_t += sum_t / static_cast<double>(tokens);
      avg_b += sum_b / static_cast<double>(tokens);
      ++prompts_seen;
    }
  }
  for (std::size_t t = 0; t < out.counts.size(); ++t) {
    out.target[t] /= static_cast<double>(out.counts[t]);
    out.behavior[t] /= static_cast<double>(out.counts[t]);
  }
  if (prompts_seen > 0) {
    out.average_target = avg_t / static_cast<double>(prompts_seen);
    out.average_behavior = avg_b / static_cast<double>(prompts_seen);
  }
  if (!prompts.empty()) {
    result.mean_length = static_cast<double>(total_tokens) / static_cast<double>(prompts.size() * samples);
  }
  return result;
}

EntropyProfile entropy_profile(const PolicyParams& params, std::span<const TaskInstance> prompts,
                               const Schedule& schedule, double d, std::size_t samples,
                               std::size_t max_len, const StreamKey& key, const WorkerPool& pool) {
  if (samples == 0) throw std::invalid_argument("entropy_profile: samples must be >= 1");
  return evaluate_prompts(params, prompts, schedule, d, samples, max_len, key, pool).entropy;
}

}  // namespace ead
