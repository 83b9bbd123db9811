#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "ead/random.hpp"
#include "ead/tasks.hpp"

using namespace ead;

namespace {

constexpr Token E = vocab::kEos;

// Walk every token sequence over the full vocabulary with length 0..max_len.
void for_each_response(std::size_t max_len, const std::function<void(const TokenSequence&)>& visit) {
  TokenSequence seq;
  std::function<void()> rec = [&] {
    visit(seq);
    if (seq.size() == max_len) return;
    for (Token t = 0; t < static_cast<Token>(vocab::kSize); ++t) {
      seq.push_back(t);
      rec();
      seq.pop_back();
    }
  };
  rec();
}

// The rule, restated without the verifier.
std::set<TokenSequence> rule_set(const TaskInstance& inst) {
  std::set<TokenSequence> out;
  switch (inst.kind) {
    case TaskKind::kSumMod: out.insert({(inst.hidden[0] + inst.hidden[1]) % 10, E}); break;
    case TaskKind::kReverse: {
      TokenSequence r(inst.hidden.rbegin(), inst.hidden.rend());
      r.push_back(E);
      out.insert(r);
      break;
    }
    case TaskKind::kAnyPair:
      for (int u = 0; u <= 9; ++u) {
        for (int v = 0; v <= 9; ++v) {
          if (u + v == inst.hidden[0]) out.insert({u, v, E});
        }
      }
      break;
  }
  return out;
}

}  // namespace

TEST_CASE("examples") {
  const auto s = make_sum_mod(7, 5);
  CHECK(correct_responses(s) == std::vector<TokenSequence>{{2, E}});
  CHECK(verify(s, TokenSequence{2, E}).reward == 1.0);
  CHECK(verify(s, TokenSequence{2, 2, E}).reward == 0.0);
  CHECK(verify(s, TokenSequence{2}).reward == 0.0);
  CHECK(verify(s, TokenSequence{2}).answer == kInvalidAnswer);
  CHECK(verify(s, TokenSequence{2, E}).answer == "2");

  const std::vector<int> digits{3, 1, 4};
  CHECK(correct_responses(make_reverse(digits)) == std::vector<TokenSequence>{{4, 1, 3, E}});

  const auto p = make_any_pair(4);
  CHECK(correct_responses(p).size() == 5);
  CHECK(verify(p, TokenSequence{1, 3, E}).reward == 1.0);
  CHECK(verify(p, TokenSequence{4, 0, E}).reward == 1.0);
  CHECK(verify(p, TokenSequence{4, 0, E}).answer == "4 0");
  CHECK(verify(p, TokenSequence{2, 3, E}).reward == 0.0);
}

TEST_CASE("prompt layout") {
  const auto s = make_sum_mod(7, 5);
  CHECK(s.prompt == TokenSequence{vocab::kBos, vocab::kTagSumMod, 7, 5, vocab::kSep});
  const auto p = make_any_pair(17);
  CHECK(p.prompt == TokenSequence{vocab::kBos, vocab::kTagAnyPair, 1, 7, vocab::kSep});
  const std::vector<int> digits{9, 0, 2, 2, 5};
  CHECK(make_reverse(digits).prompt == TokenSequence{vocab::kBos, vocab::kTagReverse, 9, 0, 2, 2, 5, vocab::kSep});
}

TEST_CASE("factories reject out-of-range inputs") {
  CHECK_THROWS(make_sum_mod(10, 1));
  CHECK_THROWS(make_sum_mod(-1, 1));
  CHECK_THROWS(make_any_pair(19));
  CHECK_THROWS(make_any_pair(-1));
  CHECK_THROWS(make_reverse(std::vector<int>{1, 2}));
  CHECK_THROWS(make_reverse(std::vector<int>{1, 2, 3, 4, 5, 6, 7}));
  CHECK_THROWS(make_reverse(std::vector<int>{1, 12, 3}));
  CHECK_THROWS(parse_task_kind("sum"));
  CHECK(parse_task_kind("any_pair") == TaskKind::kAnyPair);
  CHECK(to_string(TaskKind::kReverse) == "reverse");
}

TEST_CASE("answer extraction stops at the first EOS") {
  const auto s = make_sum_mod(1, 1);
  const auto v = verify(s, TokenSequence{2, E, 3});
  CHECK(v.reward == 0.0);
  CHECK(v.answer == "2");
  CHECK(verify(s, TokenSequence{E}).answer == "");
  CHECK(verify(s, TokenSequence{vocab::kSep, E}).answer == "<sep>");
}

TEST_CASE("any-pair correct-set size") {
  for (int n = 0; n <= 18; ++n) {
    const auto expected = static_cast<std::size_t>(std::min(n, 9) - std::max(0, n - 9) + 1);
    CHECK(correct_responses(make_any_pair(n)).size() == expected);
  }
}

TEST_CASE("property: verifier accepts exactly the rule set over all short responses") {
  RandomStream rng(3);
  std::vector<TaskInstance> instances{make_sum_mod(7, 5), make_sum_mod(0, 0), make_any_pair(0), make_any_pair(9),
                                      make_any_pair(18), make_reverse(std::vector<int>{3, 1, 4})};
  for (int i = 0; i < 3; ++i) instances.push_back(generate_instance(TaskKind::kAnyPair, rng));
  for (const auto& inst : instances) {
    const auto rule = rule_set(inst);
    std::set<TokenSequence> accepted;
    for_each_response(4, [&](const TokenSequence& y) {
      const auto v = verify(inst, y);
      CHECK((v.reward == 0.0 || v.reward == 1.0));
      if (v.reward == 1.0) accepted.insert(y);
    });
    CHECK(accepted == rule);
    const auto listed = correct_responses(inst);
    CHECK(std::set<TokenSequence>(listed.begin(), listed.end()) == rule);
  }
}

TEST_CASE("generated instances are valid and reproducible") {
  for (auto kind : {TaskKind::kSumMod, TaskKind::kReverse, TaskKind::kAnyPair}) {
    RandomStream a(17), b(17);
    for (int i = 0; i < 200; ++i) {
      const auto x = generate_instance(kind, a);
      const auto y = generate_instance(kind, b);
      CHECK(x.prompt == y.prompt);
      CHECK(x.kind == kind);
      CHECK(x.prompt.size() <= 10);
      for (Token t : x.prompt) CHECK((t >= 0 && t < static_cast<Token>(vocab::kSize)));
      CHECK(!correct_responses(x).empty());
      for (const auto& c : correct_responses(x)) CHECK(verify(x, c).reward == 1.0);
    }
  }
}

TEST_CASE("mixture draws follow the weights") {
  TaskMixture m{{{TaskKind::kSumMod, 1.0}, {TaskKind::kAnyPair, 3.0}, {TaskKind::kReverse, 0.0}}};
  RandomStream rng(4);
  int pairs = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto inst = m.draw(rng);
    CHECK(inst.kind != TaskKind::kReverse);
    pairs += inst.kind == TaskKind::kAnyPair;
  }
  CHECK(std::abs(pairs / static_cast<double>(n) - 0.75) < 0.02);
  CHECK_THROWS(TaskMixture{{}}.validate());
  CHECK_THROWS(TaskMixture{{{TaskKind::kSumMod, -1.0}}}.validate());
  CHECK_THROWS(TaskMixture{{{TaskKind::kSumMod, 0.0}}}.validate());
}
