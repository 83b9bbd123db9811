#include "ead/enumerate.hpp"

#include <cmath>
#include <stdexcept>

#include "ead/distribution.hpp"

namespace ead {
namespace {

constexpr double kMaxEnumeration = 1e6;

struct Walker {
  const PolicyParams& params;
  const Schedule& schedule;
  double d;
  std::size_t max_len;
  Token eos;
  const SequenceVisitor& visit;
  TokenSequence response;

  void descend(const PolicyCursor& cursor, double target_lp, double behavior_lp) {
    const std::size_t t = response.size();
    const auto logit = cursor.logits();
    const double tau = temperature_at(schedule, t, d);
    const auto target = softmax_at(logit, 1.0);
    const auto behavior = tau == 1.0 ? target : softmax_at(logit, tau);
    for (std::size_t v = 0; v < params.dims.vocab; ++v) {
      const auto token = static_cast<Token>(v);
      response.push_back(token);
      const double tl = target_lp + target.log_probs[v];
      const double bl = behavior_lp + behavior.log_probs[v];
      if (token == eos || response.size() == max_len) {
        visit(response, tl, bl);
      } else {
        PolicyCursor next = cursor;
        next.feed(token);
        descend(next, tl, bl);
      }
      response.pop_back();
    }
  }
};

}  // namespace

void for_each_sequence(const PolicyParams& params, std::span<const Token> prompt,
                       const Schedule& schedule, double d, std::size_t max_len, Token eos,
                       const SequenceVisitor& visit) {
  if (max_len == 0) throw std::invalid_argument("for_each_sequence: max_len must be >= 1");
  if (prompt.empty()) throw std::invalid_argument("for_each_sequence: prompt must be non-empty");
  if (std::pow(static_cast<double>(params.dims.vocab), static_cast<double>(max_len)) > kMaxEnumeration) {
    throw std::invalid_argument("for_each_sequence: vocab^max_len exceeds 1e6 sequences");
  }
  PolicyCursor cursor(params);
  cursor.feed(prompt);
  Walker walker{params, schedule, d, max_len, eos, visit, {}};
  walker.descend(cursor, 0.0, 0.0);
}

double sequence_variance_inflation(const PolicyParams& params, std::span<const Token> prompt,
                                   const Schedule& schedule, double d, std::size_t max_len,
                                   Token eos) {
  double total = 0.0;
  for_each_sequence(params, prompt, schedule, d, max_len, eos,
                    [&](const TokenSequence&, double target_lp, double behavior_lp) {
                      total += std::exp(2.0 * target_lp - behavior_lp);
                    });
  return total;
}

}  // namespace ead
