#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ead/policy.hpp"
#include "ead/random.hpp"

namespace ead {

// Shared vocabulary of all synthetic tasks. Digits map to ids 0..9.
namespace vocab {
inline constexpr Token kBos = 10;
inline constexpr Token kEos = 11;
inline constexpr Token kSep = 12;
inline constexpr Token kTagSumMod = 13;
inline constexpr Token kTagReverse = 14;
inline constexpr Token kTagAnyPair = 15;
inline constexpr std::size_t kSize = 16;

std::string token_name(Token token);
}  // namespace vocab

enum class TaskKind { kSumMod, kReverse, kAnyPair };

std::string_view to_string(TaskKind kind);
/// Accepts "sum_mod", "reverse", "any_pair". Throws std::invalid_argument otherwise.
TaskKind parse_task_kind(std::string_view name);

/// A prompt plus what its verifier needs.
///   SUM_MOD:  BOS TAG a b SEP      -> answer (a + b) mod 10
///   REVERSE:  BOS TAG d1..dm SEP   -> answer dm..d1, m in [3, 6]
///   ANY_PAIR: BOS TAG n/10 n%10 SEP -> any "u v" with u + v = n, u, v digits
struct TaskInstance {
  TaskKind kind = TaskKind::kSumMod;
  TokenSequence prompt;
  std::vector<int> hidden;  // (a, b) | digits | (n)
};

inline constexpr std::string_view kInvalidAnswer = "<invalid>";

struct Verdict {
  double reward = 0.0;  // exactly 0 or 1
  std::string answer;   // pre-EOS tokens, or kInvalidAnswer without EOS
};

TaskInstance make_sum_mod(int a, int b);
TaskInstance make_reverse(std::span<const int> digits);
TaskInstance make_any_pair(int n);

TaskInstance generate_instance(TaskKind kind, RandomStream& rng);

/// Mixture over task kinds with non-negative weights.
struct TaskMixture {
  std::vector<std::pair<TaskKind, double>> weights{{TaskKind::kSumMod, 1.0}};

  void validate() const;
  TaskInstance draw(RandomStream& rng) const;
};

/// Binary rule check: reward 1 iff the response is exactly the correct
/// tokens followed by a single trailing EOS.
Verdict verify(const TaskInstance& instance, std::span<const Token> response);

/// Every correct response (including the trailing EOS).
std::vector<TokenSequence> correct_responses(const TaskInstance& instance);

}  // namespace ead
