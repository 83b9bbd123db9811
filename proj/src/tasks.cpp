#include "ead/tasks.hpp"

#include <algorithm>
#include <stdexcept>

namespace ead {

namespace vocab {
std::string token_name(Token token) {
  if (token >= 0 && token <= 9) return std::string(1, static_cast<char>('0' + token));
  switch (token) {
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    case kSep: return "<sep>";
    case kTagSumMod: return "<sum>";
    case kTagReverse: return "<rev>";
    case kTagAnyPair: return "<pair>";
    default: return "<" + std::to_string(token) + ">";
  }
}
}  // namespace vocab

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kSumMod: return "sum_mod";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kAnyPair: return "any_pair";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "sum_mod") return TaskKind::kSumMod;
  if (name == "reverse") return TaskKind::kReverse;
  if (name == "any_pair") return TaskKind::kAnyPair;
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

namespace {

void check_digit(int d) {
  if (d < 0 || d > 9) throw std::invalid_argument("task digit out of range: " + std::to_string(d));
}

}  // namespace

TaskInstance make_sum_mod(int a, int b) {
  check_digit(a);
  check_digit(b);
  return {TaskKind::kSumMod, {vocab::kBos, vocab::kTagSumMod, a, b, vocab::kSep}, {a, b}};
}

TaskInstance make_reverse(std::span<const int> digits) {
  if (digits.size() < 3 || digits.size() > 6) {
    throw std::invalid_argument("reverse task needs 3 to 6 digits");
  }
  TaskInstance inst{TaskKind::kReverse, {vocab::kBos, vocab::kTagReverse}, {}};
  for (int d : digits) {
    check_digit(d);
    inst.prompt.push_back(d);
    inst.hidden.push_back(d);
  }
  inst.prompt.push_back(vocab::kSep);
  return inst;
}

TaskInstance make_any_pair(int n) {
  if (n < 0 || n > 18) throw std::invalid_argument("any_pair target must lie in [0, 18]");
  return {TaskKind::kAnyPair, {vocab::kBos, vocab::kTagAnyPair, n / 10, n % 10, vocab::kSep}, {n}};
}

TaskInstance generate_instance(TaskKind kind, RandomStream& rng) {
  switch (kind) {
    case TaskKind::kSumMod: {
      const int a = static_cast<int>(rng.below(10));
      const int b = static_cast<int>(rng.below(10));
      return make_sum_mod(a, b);
    }
    case TaskKind::kReverse: {
      const std::size_t len = 3 + rng.below(4);
      std::vector<int> digits(len);
      for (int& d : digits) d = static_cast<int>(rng.below(10));
      return make_reverse(digits);
    }
    case TaskKind::kAnyPair:
      return make_any_pair(static_cast<int>(rng.below(19)));
  }
  throw std::invalid_argument("generate_instance: unknown task kind");
}

void TaskMixture::validate() const {
  if (weights.empty()) throw std::invalid_argument("task mixture is empty");
  double total = 0.0;
  for (const auto& [kind, w] : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("task mixture weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("task mixture needs a positive weight");
}

TaskInstance TaskMixture::draw(RandomStream& rng) const {
  if (weights.size() == 1) return generate_instance(weights.front().first, rng);
  double total = 0.0;
  for (const auto& entry : weights) total += entry.second;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (const auto& [kind, w] : weights) {
    acc += w;
    if (u < acc) return generate_instance(kind, rng);
  }
  return generate_instance(weights.back().first, rng);
}

std::vector<TokenSequence> correct_responses(const TaskInstance& instance) {
  std::vector<TokenSequence> out;
  switch (instance.kind) {
    case TaskKind::kSumMod:
      out.push_back({(instance.hidden[0] + instance.hidden[1]) % 10, vocab::kEos});
      break;
    case TaskKind::kReverse: {
      TokenSequence r(instance.hidden.rbegin(), instance.hidden.rend());
      r.push_back(vocab::kEos);
      out.push_back(std::move(r));
      break;
    }
    case TaskKind::kAnyPair: {
      const int n = instance.hidden[0];
      for (int u = std::max(0, n - 9); u <= std::min(n, 9); ++u) out.push_back({u, n - u, vocab::kEos});
      break;
    }
  }
  return out;
}

Verdict verify(const TaskInstance& instance, std::span<const Token> response) {
  Verdict verdict;
  const auto eos = std::find(response.begin(), response.end(), vocab::kEos);
  if (eos == response.end()) {
    verdict.answer = kInvalidAnswer;
    return verdict;
  }
  for (auto it = response.begin(); it != eos; ++it) {
    if (it != response.begin()) verdict.answer += ' ';
    verdict.answer += vocab::token_name(*it);
  }
  if (eos + 1 != response.end()) return verdict;

  const std::span<const Token> body(response.begin(), eos);
  switch (instance.kind) {
    case TaskKind::kSumMod:
      verdict.reward = body.size() == 1 && body[0] == (instance.hidden[0] + instance.hidden[1]) % 10;
      break;
    case TaskKind::kReverse:
      verdict.reward = std::equal(body.begin(), body.end(), instance.hidden.rbegin(), instance.hidden.rend());
      break;
    case TaskKind::kAnyPair:
      verdict.reward = body.size() == 2 && body[0] >= 0 && body[0] <= 9 && body[1] >= 0 &&
                       body[1] <= 9 && body[0] + body[1] == instance.hidden[0];
      break;
  }
  return verdict;
}

}  // namespace ead
