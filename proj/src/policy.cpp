#include "ead/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ead/distribution.hpp"

namespace ead {
namespace {

// y = m * x (+ y when accumulate)
void matvec(const Matrix& m, const double* x, double* y, bool accumulate) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    double acc = accumulate ? y[r] : 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// y += m^T * x
void matvec_transposed_add(const Matrix& m, const double* x, double* y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
}

// m += a * b^T
void outer_add(Matrix& m, const double* a, const double* b) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += ar * b[c];
  }
}

void check_token(const PolicyParams& params, Token token) {
  if (token < 0 || static_cast<std::size_t>(token) >= params.dims.vocab) {
    throw std::invalid_argument("token id " + std::to_string(token) + " outside the vocabulary");
  }
}

void recur(const PolicyParams& params, const double* prev, Token token, double* next) {
  const std::size_t hidden = params.dims.hidden;
  matvec(params.w_rec, prev, next, false);
  matvec(params.w_in, params.embedding.row(static_cast<std::size_t>(token)).data(), next, true);
  for (std::size_t i = 0; i < hidden; ++i) next[i] = std::tanh(next[i] + params.bias.data[i]);
}

void output(const PolicyParams& params, const double* state, double* out) {
  matvec(params.w_out, state, out, false);
  for (std::size_t v = 0; v < params.dims.vocab; ++v) out[v] += params.b_out.data[v];
}

}  // namespace

PolicyParams PolicyParams::zeros(const PolicyDims& dims) {
  if (dims.vocab < 2 || dims.embed == 0 || dims.hidden == 0) {
    throw std::invalid_argument("policy dims: need vocab >= 2 and positive embed/hidden sizes");
  }
  PolicyParams p;
  p.dims = dims;
  p.embedding = Matrix(dims.vocab, dims.embed);
  p.w_in = Matrix(dims.hidden, dims.embed);
  p.w_rec = Matrix(dims.hidden, dims.hidden);
  p.bias = Matrix(dims.hidden, 1);
  p.w_out = Matrix(dims.vocab, dims.hidden);
  p.b_out = Matrix(dims.vocab, 1);
  return p;
}

PolicyParams PolicyParams::random(const PolicyDims& dims, RandomStream& rng, double scale,
                                  std::optional<double> readout_scale) {
  PolicyParams p = zeros(dims);
  for (Matrix* m : p.tensors()) {
    const double s = (m == &p.w_out || m == &p.b_out) ? readout_scale.value_or(scale) : scale;
    for (double& x : m->data) x = rng.uniform(-s, s);
  }
  return p;
}

std::array<Matrix*, PolicyParams::kTensorCount> PolicyParams::tensors() {
  return {&embedding, &w_in, &w_rec, &bias, &w_out, &b_out};
}

std::array<const Matrix*, PolicyParams::kTensorCount> PolicyParams::tensors() const {
  return {&embedding, &w_in, &w_rec, &bias, &w_out, &b_out};
}

const std::array<const char*, PolicyParams::kTensorCount>& PolicyParams::tensor_names() {
  static const std::array<const char*, kTensorCount> names = {"embedding", "w_in", "w_rec",
                                                              "bias",      "w_out", "b_out"};
  return names;
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += m->data.size();
  return n;
}

bool PolicyParams::all_finite() const {
  for (const Matrix* m : tensors()) {
    for (double x : m->data) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

void Gradients::add(const Gradients& other) {
  auto mine = values.tensors();
  auto theirs = other.values.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->data.size() != theirs[i]->data.size()) {
      throw std::invalid_argument("Gradients::add: shape mismatch");
    }
    for (std::size_t j = 0; j < mine[i]->data.size(); ++j) mine[i]->data[j] += theirs[i]->data[j];
  }
  samples += other.samples;
}

void Gradients::scale(double factor) {
  for (Matrix* m : values.tensors()) {
    for (double& x : m->data) x *= factor;
  }
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const Matrix* m : values.tensors()) {
    for (double x : m->data) sq += x * x;
  }
  return std::sqrt(sq);
}

bool Gradients::all_finite() const { return values.all_finite(); }

PolicyCursor::PolicyCursor(const PolicyParams& params)
    : params_(&params), state_(params.dims.hidden, 0.0), scratch_(params.dims.hidden, 0.0) {}

void PolicyCursor::feed(Token token) {
  check_token(*params_, token);
  recur(*params_, state_.data(), token, scratch_.data());
  std::swap(state_, scratch_);
  ++length_;
}

void PolicyCursor::feed(std::span<const Token> tokens) {
  for (Token t : tokens) feed(t);
}

std::vector<double> PolicyCursor::logits() const {
  std::vector<double> out(params_->dims.vocab);
  output(*params_, state_.data(), out.data());
  return out;
}

std::vector<double> logits(const PolicyParams& params, std::span<const Token> prefix) {
  if (prefix.empty()) throw std::invalid_argument("logits: prefix must be non-empty");
  PolicyCursor cursor(params);
  cursor.feed(prefix);
  return cursor.logits();
}

std::vector<double> token_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                   std::span<const Token> response, std::span<const double> taus) {
  if (prompt.empty()) throw std::invalid_argument("token_logprobs: prompt must be non-empty");
  PolicyCursor cursor(params);
  cursor.feed(prompt);
  return token_logprobs(cursor, response, taus);
}

std::vector<double> token_logprobs(PolicyCursor cursor, std::span<const Token> response,
                                   std::span<const double> taus) {
  if (!taus.empty() && taus.size() != response.size()) {
    throw std::invalid_argument("token_logprobs: one temperature per response token required");
  }
  const PolicyParams& params = cursor.params();
  std::vector<double> out(response.size());
  for (std::size_t t = 0; t < response.size(); ++t) {
    check_token(params, response[t]);
    const double tau = taus.empty() ? 1.0 : taus[t];
    const auto dist = softmax_at(cursor.logits(), tau);
    out[t] = dist.log_probs[static_cast<std::size_t>(response[t])];
    if (t + 1 < response.size()) cursor.feed(response[t]);
  }
  return out;
}

double sequence_logprob(const PolicyParams& params, std::span<const Token> prompt,
                        std::span<const Token> response, std::span<const double> taus) {
  if (taus.size() != response.size()) {
    throw std::invalid_argument("sequence_logprob: one temperature per response token required");
  }
  double total = 0.0;
  for (double lp : token_logprobs(params, prompt, response, taus)) total += lp;
  return total;
}

void accumulate_gradient(const PolicyParams& params, const WeightedSequence& term,
                         Gradients& out) {
  accumulate_gradient(params, std::span<const WeightedSequence>(&term, 1), out);
}

void accumulate_gradient(const PolicyParams& params, std::span<const WeightedSequence> terms,
                         Gradients& out) {
  if (terms.empty()) return;
  const TokenSequence& prompt = terms.front().prompt;
  const std::size_t prompt_len = prompt.size();
  if (prompt_len == 0) throw std::invalid_argument("accumulate_gradient: empty prompt");
  for (Token t : prompt) check_token(params, t);
  for (const auto& term : terms) {
    if (term.prompt != prompt) throw std::invalid_argument("accumulate_gradient: terms must share a prompt");
    if (term.weights.size() != term.response.size()) {
      throw std::invalid_argument("accumulate_gradient: one weight per response token required");
    }
    if (!term.taus.empty() && term.taus.size() != term.response.size()) {
      throw std::invalid_argument("accumulate_gradient: one temperature per response token required");
    }
    for (Token t : term.response) check_token(params, t);
  }
  out.samples += terms.size();

  const std::size_t hidden = params.dims.hidden;
  const std::size_t vocab = params.dims.vocab;
  PolicyParams& g = out.values;

  // One step of BPTT: d_pre from d_state at `state`, then into the weights
  // and, when `d_prev` is non-null, the previous state.
  std::vector<double> d_pre(hidden);
  auto step_back = [&](const double* state, const double* prev, const double* d_s, Token input, double* d_prev) {
    for (std::size_t i = 0; i < hidden; ++i) d_pre[i] = d_s[i] * (1.0 - state[i] * state[i]);
    const auto token = static_cast<std::size_t>(input);
    outer_add(g.w_rec, d_pre.data(), prev);
    outer_add(g.w_in, d_pre.data(), params.embedding.row(token).data());
    for (std::size_t i = 0; i < hidden; ++i) g.bias.data[i] += d_pre[i];
    matvec_transposed_add(params.w_in, d_pre.data(), g.embedding.row(token).data());
    if (d_prev) matvec_transposed_add(params.w_rec, d_pre.data(), d_prev);
  };

  // states[k] follows the first k prompt tokens; states[0] = 0.
  std::vector<double> prompt_states((prompt_len + 1) * hidden, 0.0);
  for (std::size_t k = 0; k < prompt_len; ++k) {
    recur(params, &prompt_states[k * hidden], prompt[k], &prompt_states[(k + 1) * hidden]);
  }
  const double* boundary = &prompt_states[prompt_len * hidden];
  std::vector<double> d_boundary(hidden, 0.0);
  bool any = false;

  std::vector<double> states, d_state, logit(vocab), d_logit(vocab);
  for (const auto& term : terms) {
    const std::size_t len = term.response.size();
    if (std::all_of(term.weights.begin(), term.weights.end(), [](double w) { return w == 0.0; })) continue;
    any = true;
    // local state j is the state before response token j; j = 0 is the boundary.
    states.assign(len * hidden, 0.0);
    std::copy(boundary, boundary + hidden, states.begin());
    for (std::size_t j = 1; j < len; ++j) {
      recur(params, &states[(j - 1) * hidden], term.response[j - 1], &states[j * hidden]);
    }
    d_state.assign(len * hidden, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      const double w = term.weights[t];
      if (w == 0.0) continue;
      const double tau = term.taus.empty() ? 1.0 : term.taus[t];
      const double* state = &states[t * hidden];
      output(params, state, logit.data());
      const auto dist = softmax_at(logit, tau);
      const auto target = static_cast<std::size_t>(term.response[t]);
      for (std::size_t v = 0; v < vocab; ++v) {
        d_logit[v] = w * ((v == target ? 1.0 : 0.0) - dist.probs[v]) / tau;
      }
      outer_add(g.w_out, d_logit.data(), state);
      for (std::size_t v = 0; v < vocab; ++v) g.b_out.data[v] += d_logit[v];
      matvec_transposed_add(params.w_out, d_logit.data(), &d_state[t * hidden]);
    }
    for (std::size_t j = len - 1; j >= 1; --j) {
      step_back(&states[j * hidden], &states[(j - 1) * hidden], &d_state[j * hidden], term.response[j - 1],
                &d_state[(j - 1) * hidden]);
    }
    for (std::size_t i = 0; i < hidden; ++i) d_boundary[i] += d_state[i];
  }
  if (!any) return;

  std::vector<double> d_prompt((prompt_len + 1) * hidden, 0.0);
  std::copy(d_boundary.begin(), d_boundary.end(), d_prompt.begin() + static_cast<std::ptrdiff_t>(prompt_len * hidden));
  for (std::size_t k = prompt_len; k >= 1; --k) {
    step_back(&prompt_states[k * hidden], &prompt_states[(k - 1) * hidden], &d_prompt[k * hidden], prompt[k - 1],
              k > 1 ? &d_prompt[(k - 1) * hidden] : nullptr);
  }
}

void accumulate_runs(const PolicyParams& params, std::span<const WeightedSequence> terms, Gradients& out) {
  std::size_t i = 0;
  while (i < terms.size()) {
    std::size_t j = i + 1;
    while (j < terms.size() && terms[j].prompt == terms[i].prompt) ++j;
    accumulate_gradient(params, terms.subspan(i, j - i), out);
    i = j;
  }
}

Gradients backward(const PolicyParams& params, const LossGraph& graph) {
  Gradients grads(params.dims);
  accumulate_runs(params, graph, grads);
  return grads;
}

AdamOptimizer::AdamOptimizer(const PolicyDims& dims, AdamConfig config)
    : config_(config),
      first_moment_(PolicyParams::zeros(dims)),
      second_moment_(PolicyParams::zeros(dims)) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
}

void AdamOptimizer::step(PolicyParams& params, const Gradients& grads) {
  if (!(params.dims == grads.values.dims)) throw std::invalid_argument("adam: shape mismatch");
  if (!grads.all_finite()) throw NonFiniteError("non-finite gradient; optimizer step aborted");

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  auto p = params.tensors();
  auto g = grads.values.tensors();
  auto m = first_moment_.tensors();
  auto v = second_moment_.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i]->data.size(); ++j) {
      const double gj = g[i]->data[j];
      double& mj = m[i]->data[j];
      double& vj = v[i]->data[j];
      mj = config_.beta1 * mj + (1.0 - config_.beta1) * gj;
      vj = config_.beta2 * vj + (1.0 - config_.beta2) * gj * gj;
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      p[i]->data[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

// Checkpoint layout, all integers little-endian:
//   magic "EADCKPT\0" | u32 version | u32 vocab | u32 embed | u32 hidden | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rows | u32 cols | rows*cols f64 (LE IEEE-754)
namespace {

constexpr char kMagic[8] = {'E', 'A', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t x) {
  const char bytes[4] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
                         static_cast<char>((x >> 16) & 0xFF), static_cast<char>((x >> 24) & 0xFF)};
  os.write(bytes, 4);
}

void put_f64(std::ostream& os, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(bytes, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

double get_f64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(params.dims.vocab));
  put_u32(os, static_cast<std::uint32_t>(params.dims.embed));
  put_u32(os, static_cast<std::uint32_t>(params.dims.hidden));
  put_u32(os, static_cast<std::uint32_t>(PolicyParams::kTensorCount));
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = PolicyParams::tensor_names()[i];
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(tensors[i]->rows));
    put_u32(os, static_cast<std::uint32_t>(tensors[i]->cols));
    for (double x : tensors[i]->data) put_f64(os, x);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = get_u32(is);
  if (version != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  PolicyDims dims;
  dims.vocab = get_u32(is);
  dims.embed = get_u32(is);
  dims.hidden = get_u32(is);
  PolicyParams params = PolicyParams::zeros(dims);
  const std::uint32_t count = get_u32(is);
  if (count != PolicyParams::kTensorCount) throw std::runtime_error("checkpoint: unexpected tensor count");
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated file");
    if (name != PolicyParams::tensor_names()[i]) {
      throw std::runtime_error("checkpoint: expected tensor '" +
                               std::string(PolicyParams::tensor_names()[i]) + "', found '" + name + "'");
    }
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    if (rows != tensors[i]->rows || cols != tensors[i]->cols) {
      throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
    }
    for (double& x : tensors[i]->data) x = get_f64(is);
  }
  return params;
}

}  // namespace ead
