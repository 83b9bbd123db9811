#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "ead/policy.hpp"
#include "ead/schedule.hpp"

namespace ead {

/// Visitor receives a complete response (EOS-terminated, or cut at max_len),
/// its log-probability under the tau = 1 target policy and under the
/// scheduled behavior policy.
using SequenceVisitor =
    std::function<void(const TokenSequence& response, double target_logprob, double behavior_logprob)>;

/// Exhaustively walks every response of length <= max_len. Throws
/// std::invalid_argument when vocab^max_len exceeds 10^6.
void for_each_sequence(const PolicyParams& params, std::span<const Token> prompt,
                       const Schedule& schedule, double d, std::size_t max_len, Token eos,
                       const SequenceVisitor& visit);

/// Exact sum_y pi(y | x; 1)^2 / pi(y | x; schedule) over all responses,
/// the sequence-level variance-inflation factor.
double sequence_variance_inflation(const PolicyParams& params, std::span<const Token> prompt,
                                   const Schedule& schedule, double d, std::size_t max_len,
                                   Token eos);

}  // namespace ead
