#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ead/distribution.hpp"
#include "ead/random.hpp"

namespace ead {

using Token = int;
using TokenSequence = std::vector<Token>;

struct PolicyDims {
  std::size_t vocab = 16;
  std::size_t embed = 32;
  std::size_t hidden = 64;

  bool operator==(const PolicyDims&) const = default;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Parameters of the recurrent policy
///
///   state_k = tanh(w_rec * state_{k-1} + w_in * embedding[token_k] + bias),  state_0 = 0
///   logits  = w_out * state_last + b_out
struct PolicyParams {
  static constexpr std::size_t kTensorCount = 6;

  PolicyDims dims;
  Matrix embedding;  // vocab x embed
  Matrix w_in;       // hidden x embed
  Matrix w_rec;      // hidden x hidden
  Matrix bias;       // hidden x 1
  Matrix w_out;      // vocab x hidden
  Matrix b_out;      // vocab x 1

  static PolicyParams zeros(const PolicyDims& dims);
  /// Every entry uniform in (-scale, scale); w_out and b_out use
  /// `readout_scale` instead when given.
  static PolicyParams random(const PolicyDims& dims, RandomStream& rng, double scale = 0.08,
                             std::optional<double> readout_scale = std::nullopt);

  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;
  static const std::array<const char*, kTensorCount>& tensor_names();

  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const PolicyParams&) const = default;
};

/// Gradient buffer shaped like PolicyParams.
struct Gradients {
  PolicyParams values;
  std::size_t samples = 0;

  explicit Gradients(const PolicyDims& dims) : values(PolicyParams::zeros(dims)) {}

  void add(const Gradients& other);
  void scale(double factor);
  double norm() const;
  bool all_finite() const;
};

/// Incremental evaluation of the recurrence, used for decoding.
class PolicyCursor {
 public:
  explicit PolicyCursor(const PolicyParams& params);

  void feed(Token token);
  void feed(std::span<const Token> tokens);
  /// Logits for the next token given everything fed so far.
  std::vector<double> logits() const;
  std::size_t length() const { return length_; }
  const PolicyParams& params() const { return *params_; }

 private:
  const PolicyParams* params_;
  std::vector<double> state_;
  std::vector<double> scratch_;
  std::size_t length_ = 0;
};

/// Next-token logits after `prefix`. Throws on an empty prefix or an
/// out-of-vocabulary id.
std::vector<double> logits(const PolicyParams& params, std::span<const Token> prefix);

/// sum_t log softmax(logits([prompt, response_<t]) / tau_t)[response_t].
double sequence_logprob(const PolicyParams& params, std::span<const Token> prompt,
                        std::span<const Token> response, std::span<const double> taus);

/// Per-token log-probabilities of `response` at the per-token temperatures
/// (all 1 when `taus` is empty).
std::vector<double> token_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                   std::span<const Token> response,
                                   std::span<const double> taus = {});

/// Same, continuing from a cursor that has consumed the prompt.
std::vector<double> token_logprobs(PolicyCursor cursor, std::span<const Token> response,
                                   std::span<const double> taus = {});

/// One term of a loss of the form sum_t weight_t * log pi(response_t | ...; tau_t).
/// Every objective reduces to this shape once its per-token coefficients are
/// evaluated at the current parameters.
struct WeightedSequence {
  TokenSequence prompt;
  TokenSequence response;
  std::vector<double> weights;
  std::vector<double> taus;  // empty means tau = 1 for every token
};

using LossGraph = std::vector<WeightedSequence>;

/// Adds d/dtheta sum_t weight_t * log pi(...) for one sequence into `out`.
void accumulate_gradient(const PolicyParams& params, const WeightedSequence& term,
                         Gradients& out);

/// Same for several terms with one prompt; the prompt's forward and backward
/// passes are shared.
void accumulate_gradient(const PolicyParams& params, std::span<const WeightedSequence> terms,
                         Gradients& out);

/// Accumulates `terms` in order, sharing work across runs of equal prompts.
void accumulate_runs(const PolicyParams& params, std::span<const WeightedSequence> terms, Gradients& out);

Gradients backward(const PolicyParams& params, const LossGraph& graph);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with moments stored beside the parameters they update.
class AdamOptimizer {
 public:
  AdamOptimizer(const PolicyDims& dims, AdamConfig config);

  /// Descends along `grads`. Throws NonFiniteError (leaving params and
  /// moments untouched) if any gradient entry is not finite.
  void step(PolicyParams& params, const Gradients& grads);

  std::size_t steps_taken() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  PolicyParams first_moment_;
  PolicyParams second_moment_;
  std::size_t steps_ = 0;
};

/// Binary checkpoint; byte layout is documented in docs/checkpoint_format.md.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ead
