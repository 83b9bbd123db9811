#include "ead/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ead {
namespace {

void check_logits(std::span<const double> logits) {
  if (logits.size() < 2) throw std::invalid_argument("logit vector needs at least 2 entries");
  for (double h : logits) {
    if (!std::isfinite(h)) throw NonFiniteError("logit vector contains a non-finite value");
  }
}

}  // namespace

TokenDistribution softmax_at(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("softmax_at: tau must be > 0");
  check_logits(logits);

  TokenDistribution dist;
  dist.tau = tau;
  dist.probs.resize(logits.size());
  dist.log_probs.resize(logits.size());

  double max_scaled = -INFINITY;
  for (double h : logits) max_scaled = std::max(max_scaled, h / tau);
  double z = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    const double shifted = logits[v] / tau - max_scaled;
    dist.log_probs[v] = shifted;
    z += std::exp(shifted);
  }
  const double log_z = std::log(z);
  for (std::size_t v = 0; v < logits.size(); ++v) {
    dist.log_probs[v] -= log_z;
    dist.probs[v] = std::exp(dist.log_probs[v]);
  }
  return dist;
}

std::size_t sample(const TokenDistribution& dist, RandomStream& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t v = 0; v < dist.probs.size(); ++v) {
    if (dist.probs[v] <= 0.0) continue;
    last_positive = v;
    cumulative += dist.probs[v];
    if (u < cumulative) return v;
  }
  // Rounding left the cumulative sum slightly below u.
  return last_positive;
}

double token_entropy(const TokenDistribution& dist) {
  double h = 0.0;
  for (std::size_t v = 0; v < dist.probs.size(); ++v) {
    if (dist.probs[v] > 0.0) h -= dist.probs[v] * dist.log_probs[v];
  }
  return std::max(h, 0.0);
}

double entropy_beta_derivative(std::span<const double> logits, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("entropy_beta_derivative: beta must be > 0");
  const TokenDistribution p = softmax_at(logits, 1.0 / beta);
  double mean = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) mean += p.probs[v] * logits[v];
  double var = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    const double dev = logits[v] - mean;
    var += p.probs[v] * dev * dev;
  }
  return -beta * var;
}

double variance_inflation(std::span<const double> weights, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("variance_inflation: tau must be > 0");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw std::invalid_argument("variance_inflation: weights must lie in [0, 1]");
    }
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("variance_inflation: need a positive weight");

  const double x = 1.0 / tau;
  double inflated = 0.0;
  double tempered = 0.0;
  for (double w : weights) {
    if (w == 0.0) continue;
    const double log_w = std::log(w);
    inflated += std::exp((2.0 - x) * log_w);
    tempered += std::exp(x * log_w);
  }
  return inflated * tempered / (total * total);
}

double variance_inflation_from_logits(std::span<const double> logits, double tau) {
  check_logits(logits);
  const double max_h = *std::max_element(logits.begin(), logits.end());
  std::vector<double> weights(logits.size());
  for (std::size_t v = 0; v < logits.size(); ++v) weights[v] = std::exp(logits[v] - max_h);
  return variance_inflation(weights, tau);
}

}  // namespace ead
