#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "ead/random.hpp"

namespace ead {

/// Categorical next-token distribution formed at temperature `tau`.
/// `log_probs` are kept alongside `probs` so that entropies and log-likelihoods
/// stay accurate when a probability underflows.
struct TokenDistribution {
  std::vector<double> probs;
  std::vector<double> log_probs;
  double tau = 1.0;

  std::size_t size() const { return probs.size(); }
};

/// A logit, loss or gradient that should be finite was not.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// softmax(h / tau) with the max logit subtracted before exponentiation.
/// Throws NonFiniteError for non-finite logits and std::invalid_argument for
/// tau <= 0 or |V| < 2.
TokenDistribution softmax_at(std::span<const double> logits, double tau);

/// Inverse-CDF draw in vocabulary order. Consumes exactly one uniform.
std::size_t sample(const TokenDistribution& dist, RandomStream& rng);

/// Shannon entropy in nats, 0 ln 0 := 0.
double token_entropy(const TokenDistribution& dist);

/// dH/dbeta = -beta * Var_{v ~ softmax(beta h)}(h_v), beta = 1/tau.
double entropy_beta_derivative(std::span<const double> logits, double beta);

/// Variance-inflation factor of sampling at `tau` from unnormalized weights
/// w_i in [0, 1] (tempering is the power map w_i^(1/tau)):
///
///   (sum_i w_i^(2 - 1/tau)) (sum_i w_i^(1/tau)) / (sum_i w_i)^2
///
/// which equals E_{y ~ p_tau}[(p_1(y) / p_tau(y))^2]. Zero weights are
/// excluded from both sums (they have zero probability at every tau).
double variance_inflation(std::span<const double> weights, double tau);

/// Same factor for a logit vector: w_i = exp(h_i - max h) lies in (0, 1] and
/// w_i^(1/tau) = exp((h_i - max h) / tau), i.e. the ordinary temperature map.
double variance_inflation_from_logits(std::span<const double> logits, double tau);

}  // namespace ead
