// Acceptance suite. Prints one PASS/FAIL line per criterion. Exits nonzero
// if a criterion fails that was not named with --known-failure N, or if a
// named one passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ead/config.hpp"
#include "ead/distribution.hpp"
#include "ead/enumerate.hpp"
#include "ead/metrics.hpp"
#include "ead/objectives.hpp"
#include "ead/rollout.hpp"
#include "ead/runner.hpp"
#include "ead/schedule.hpp"
#include "support/oracles.hpp"

using namespace ead;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

ExperimentConfig config_named(const std::string& name) {
  return load_config(fs::path(EAD_CONFIG_DIR) / (name + ".json"));
}

double cell(const MetricsRow& row, const std::string& column) {
  const auto it = row.find(column);
  if (it == row.end() || it->second.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(it->second);
}

// Largest value of a column over every row where it is present.
double column_max(const std::vector<MetricsRow>& rows, const std::string& column) {
  double best = -INFINITY;
  for (const auto& r : rows) {
    const double x = cell(r, column);
    if (!std::isnan(x)) best = std::max(best, x);
  }
  return best;
}

double last_eval(const std::vector<MetricsRow>& rows, const std::string& column) {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    const double x = cell(*it, column);
    if (!std::isnan(x)) return x;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> normal_logits(RandomStream& rng, std::size_t n, double sd) {
  std::vector<double> h(n);
  for (auto& x : h) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    x = sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  return h;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct SeedRun {
  std::uint64_t seed;
  TrainResult result;
};

// Trained runs shared between criteria, with the time spent producing them.
struct SharedRuns {
  std::vector<SeedRun> runs;
  double seconds = 0.0;
};

SharedRuns train_seeds(const ExperimentConfig& base) {
  SharedRuns out;
  const auto start = Clock::now();
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    out.runs.push_back({seed, train(cfg, std::nullopt)});
  }
  out.seconds = seconds_since(start);
  return out;
}

Outcome schedule_exactness() {
  Outcome o;
  AnnealSchedule s;  // tau_max 1.2, tau_min 0.1
  for (double d : {1.0, 25.0, 1000.0, 40000.0}) {
    o.require(temperature_at(s, 0, d) == s.tau_max, "tau_0 != tau_max");
    const double cross = d * std::log(1 + s.tau_max - s.tau_min);
    const auto past = static_cast<std::size_t>(std::floor(cross)) + 1;
    for (std::size_t t = past; t < past + 50; ++t) {
      o.require(std::abs(temperature_at(s, t, d) - s.tau_min) <= 1e-12, "floor not reached past crossing");
    }
    for (std::size_t t = 0; t < past; ++t) {
      const double expected = 1 + s.tau_max - std::exp(t / d);
      o.require(std::abs(temperature_at(s, t, d) - std::max(expected, s.tau_min)) <= 1e-12,
                "closed form mismatch before the floor");
    }
  }
  AnnealSchedule warm = s;
  warm.warmup = 10;
  for (std::size_t t = 0; t < 10; ++t) {
    o.require(std::abs(temperature_at(warm, t, 25.0) - 1.0) <= 1e-12, "warm-up temperature != 1");
  }
  o.require(temperature_at(warm, 10, 25.0) == s.tau_max, "anneal does not restart at c");
  for (std::int64_t step : {0LL, 1LL, 10LL, 10000LL, 10000000LL}) {
    const double expected = std::min(s.d0 + 5.0 * static_cast<double>(step), 40000.0);
    o.require(decay_rate(s, step) == expected, "decay rate mismatch at step " + std::to_string(step));
  }
  o.detail = o.pass ? "tau_0, floor, warm-up and d_s exact" : o.detail;
  return o;
}

Outcome entropy_monotonicity() {
  Outcome o;
  RandomStream rng(2001);
  const std::vector<double> grid{0.1, 0.3, 0.6, 1, 1.2, 2, 5, 20};
  double worst_drop = 0, worst_rel = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = normal_logits(rng, 2 + rng.below(63), 3.0);
    double prev = -INFINITY;
    for (double tau : grid) {
      const double H = token_entropy(softmax_at(h, tau));
      worst_drop = std::max(worst_drop, prev - H);
      prev = H;
    }
    const double beta = rng.uniform(0.2, 3.0);
    const double eps = 1e-5;
    const double fd = (token_entropy(softmax_at(h, 1 / (beta + eps))) -
                       token_entropy(softmax_at(h, 1 / (beta - eps)))) /
                      (2 * eps);
    const double an = entropy_beta_derivative(h, beta);
    worst_rel = std::max(worst_rel, std::abs(an - fd) / std::max(std::abs(an), 1e-12));
  }
  o.require(worst_drop <= 1e-9, "entropy decreased by " + fmt("%.3g", worst_drop));
  o.require(worst_rel < 1e-4, "derivative rel. error " + fmt("%.3g", worst_rel));
  if (o.pass) o.detail = "max decrease " + fmt("%.2g", worst_drop) + ", derivative rel. err " + fmt("%.2g", worst_rel);
  return o;
}

Outcome variance_inflation_minimum() {
  Outcome o;
  RandomStream rng(3001);
  std::vector<double> grid;
  for (int i = 0; i < 25; ++i) grid.push_back(std::pow(10.0, -1.0 + 2.0 * i / 24.0));
  const auto check_curve = [&](const std::vector<double>& f, const char* what) {
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] < f[argmin]) argmin = i;
      if (i == 0) continue;
      if (grid[i] <= 1.0) o.require(f[i] <= f[i - 1] + 1e-10, std::string(what) + " rises below tau = 1");
      else o.require(f[i] + 1e-10 >= f[i - 1], std::string(what) + " falls above tau = 1");
    }
    o.require(grid[argmin] == 1.0 || std::abs(f[argmin] - 1.0) <= 1e-10, std::string(what) + " minimum away from tau = 1");
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(2 + rng.below(10));
    for (auto& x : w) x = rng.uniform();
    std::vector<double> f;
    for (double tau : grid) f.push_back(variance_inflation(w, tau));
    check_curve(f, "token inflation");
  }
  const TokenSequence prompt{0, 1};
  const Token eos = 2;
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = PolicyParams::random(PolicyDims{3, 4, 5}, rng, 0.9);
    std::vector<double> f;
    for (double tau : grid) f.push_back(sequence_variance_inflation(p, prompt, FixedSchedule{tau}, 1, 3, eos));
    check_curve(f, "sequence inflation");
    o.require(std::abs(sequence_variance_inflation(p, prompt, FixedSchedule{1.0}, 1, 3, eos) - 1.0) <= 1e-12,
              "sequence inflation at tau = 1 is not 1");
  }
  if (o.pass) o.detail = "100 weight vectors and 5 enumerated policies, minimum at tau = 1";
  return o;
}

Outcome tis_unbiasedness() {
  Outcome o;
  RandomStream rng(4001);
  double worst_gap = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = PolicyParams::random(PolicyDims{3, 4, 5}, rng, 0.9);
    const TokenSequence prompt{0, 1};
    AnnealSchedule s;
    s.tau_max = 1.5;
    s.tau_min = 0.3;
    s.d0 = 2;
    double on_policy = 0, unbiased = 0;
    std::vector<double> capped(3, 0.0);
    const double caps[] = {0.5, 1.5, 4.0};
    for_each_sequence(p, prompt, s, 2.0, 3, 2, [&](const TokenSequence& y, double tlp, double blp) {
      const double R = rng.uniform();
      Rollout r;
      r.tokens = y;
      r.target_logprobs = token_logprobs(p, prompt, y);
      std::vector<double> taus;
      for (std::size_t t = 0; t < y.size(); ++t) taus.push_back(temperature_at(s, t, 2.0));
      r.behavior_logprobs = token_logprobs(p, prompt, y, taus);
      on_policy += std::exp(tlp) * R;
      unbiased += std::exp(blp) * tis_weight(r, TisMode::kPerSequence, INFINITY)[0] * R;
      for (int c = 0; c < 3; ++c) capped[c] += std::exp(blp) * tis_weight(r, TisMode::kPerSequence, caps[c])[0] * R;
    });
    worst_gap = std::max(worst_gap, std::abs(unbiased - on_policy));
    for (double v : capped) o.require(v <= unbiased + 1e-15, "capped expectation exceeds the uncapped one");
  }
  o.require(worst_gap <= 1e-10, "uncapped TIS bias " + fmt("%.3g", worst_gap));
  if (o.pass) o.detail = "max |E_beh[wR] - E_1[R]| = " + fmt("%.2g", worst_gap);
  return o;
}

Outcome gradient_fidelity() {
  Outcome o;
  const PolicyDims dims{5, 4, 6};
  double worst = 0;
  for (auto kind : {ObjectiveKind::kDapo, ObjectiveKind::kGrpo, ObjectiveKind::kPg}) {
    for (std::uint64_t i = 0; i < 20; ++i) {
      RandomStream rng(5000 + 100 * static_cast<std::uint64_t>(kind) + i);
      const auto old = PolicyParams::random(dims, rng, 0.5);
      const auto ref = testing::perturbed(old, rng, 0.2);
      const auto now = testing::perturbed(old, rng, 0.15);
      const auto batch = testing::random_batch(old, rng, 2, 3, 4);
      ObjectiveConfig cfg;
      cfg.kind = kind;
      cfg.tis_mode = static_cast<TisMode>(i % 3);
      cfg.kl_coeff = kind == ObjectiveKind::kGrpo ? 0.4 : 0.0;
      auto res = compute_loss(batch, now, ref, cfg);
      const auto analytic = testing::flatten(loss_gradients(now, res).values);
      const auto numeric = testing::finite_difference_gradient(
          now, [&](const PolicyParams& q) { return compute_loss(batch, q, ref, cfg).report.loss; }, 1e-5);
      worst = std::max(worst, testing::relative_error(analytic, numeric));
    }
  }
  o.require(worst < 1e-4, "gradient rel. error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "60 instances, max rel. error " + fmt("%.2g", worst);
  return o;
}

PromptSamples samples_with(std::size_t n, std::size_t c) {
  PromptSamples s;
  for (std::size_t i = 0; i < n; ++i) {
    s.correct.push_back(i < c);
    s.answers.push_back(i < c ? "ok" : "no" + std::to_string(i));
  }
  return s;
}

Outcome estimator_oracles() {
  Outcome o;
  double worst = 0;
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t c = 0; c <= n; ++c) {
      for (std::size_t k = 1; k <= n; ++k) {
        const auto counts = testing::enumerate_subsets(n, c, k);
        const EvalBatch b{samples_with(n, c)};
        worst = std::max(worst, std::abs(pass_at_k(b, k) - counts.any_correct / counts.total));
        worst = std::max(worst, std::abs(worst_at_k(b, k) - counts.all_correct / counts.total));
      }
    }
  }
  o.require(worst <= 1e-14, "estimator differs from enumeration by " + fmt("%.3g", worst));
  const EvalBatch half{samples_with(4, 2)};
  o.require(std::abs(pass_at_k(half, 2) - 5.0 / 6) <= 1e-15, "pass@2(n=4, c=2) != 5/6");
  o.require(std::abs(worst_at_k(half, 2) - 1.0 / 6) <= 1e-15, "worst@2(n=4, c=2) != 1/6");
  if (o.pass) o.detail = "all n <= 8 match enumeration, n=4 c=2 k=2 gives 5/6 and 1/6";
  return o;
}

Outcome learnability(const SharedRuns& runs) {
  Outcome o;
  std::vector<double> best;
  for (const auto& r : runs.runs) best.push_back(column_max(r.result.rows, "pass@1"));
  const auto hits = std::count_if(best.begin(), best.end(), [](double x) { return x > 0.9; });
  o.require(hits >= 4, std::to_string(hits) + "/5 seeds above 0.9");
  o.detail = "best pass@1 per seed " + list(best) + " (" + std::to_string(hits) + "/5 > 0.9)";
  return o;
}

struct ExplorationRuns {
  ExperimentConfig ead_config;
  SharedRuns ead;
  std::vector<std::pair<double, SharedRuns>> fixed;
};

Outcome exploration_benefit(const ExplorationRuns& x) {
  Outcome o;
  std::vector<double> ead_p8;
  for (const auto& r : x.ead.runs) ead_p8.push_back(last_eval(r.result.rows, "pass@8"));
  double best_fixed = -1;
  std::string fixed_text;
  for (const auto& [tau, runs] : x.fixed) {
    std::vector<double> p8;
    for (const auto& r : runs.runs) p8.push_back(last_eval(r.result.rows, "pass@8"));
    best_fixed = std::max(best_fixed, median(p8));
    fixed_text += " tau=" + fmt("%g", tau) + ":" + fmt("%.3f", median(p8));
  }
  const double ead_med = median(ead_p8);
  o.require(ead_med >= best_fixed, "EAD median pass@8 below the best fixed temperature");

  std::vector<double> maj_ead, maj_fixed;
  for (const auto& r : x.ead.runs) {
    ExperimentConfig cfg = x.ead_config;
    cfg.seed = r.seed;
    const auto rows = run_inference_scaling(r.result.params, cfg, {8},
                                            {{"ead", cfg.schedule}, {"tau=1", FixedSchedule{1.0}}});
    maj_ead.push_back(rows[0].majority);
    maj_fixed.push_back(rows[1].majority);
  }
  o.require(median(maj_ead) >= median(maj_fixed), "EAD maj@8 below fixed tau = 1 maj@8");
  o.detail = "median pass@8 EAD " + fmt("%.3f", ead_med) + " vs" + fixed_text + "; maj@8 EAD " +
             fmt("%.3f", median(maj_ead)) + " vs tau=1 " + fmt("%.3f", median(maj_fixed));
  return o;
}

Outcome entropy_dynamics(const SharedRuns& sum_mod, const ExplorationRuns& x) {
  Outcome o;
  std::vector<double> rho;
  for (const auto& r : sum_mod.runs) rho.push_back(last_eval(r.result.rows, "entropy_position_spearman"));
  o.require(median(rho) < 0, "median position/entropy Spearman is not negative");

  // Along EAD rollouts of trained policies, compare the sampler's entropy with
  // the tau = 1 entropy of the same next-token distribution.
  std::size_t above = 0, below = 0, strict = 0, violations = 0;
  AnnealSchedule wide;
  wide.d0 = 6;
  const auto check = [&](const PolicyParams& params, const ExperimentConfig& cfg, const Schedule& schedule,
                         double d, std::uint64_t seed) {
    const auto prompts = eval_prompts(cfg);
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      RandomStream rng = RandomStream::derive(seed, {77, p});
      generate(params, prompts[p], schedule, d, cfg.max_len, rng, [&](const DecodeStep& step) {
        const double tau = temperature_at(schedule, step.position, d);
        const double hb = token_entropy(step.behavior);
        const double ht = token_entropy(step.target);
        if (tau > 1) {
          ++above;
          if (hb + 1e-9 < ht) ++violations;
          if (hb > ht) ++strict;
        } else if (tau < 1) {
          ++below;
          if (hb > ht + 1e-9) ++violations;
          if (hb < ht) ++strict;
        }
      });
    }
  };
  for (const auto& r : x.ead.runs) {
    const Schedule& s = x.ead_config.schedule;
    check(r.result.params, x.ead_config, s, *decay_rate(s, 0), r.seed);
    check(r.result.params, x.ead_config, wide, wide.d0, r.seed);
  }
  o.require(above > 0 && below > 0, "no positions on one side of the crossing");
  o.require(violations == 0, std::to_string(violations) + " positions violate the entropy ordering");
  o.detail = "median Spearman " + fmt("%.3f", median(rho)) + " (" + list(rho, "%.2f") + "); " +
             std::to_string(above) + " positions above and " + std::to_string(below) +
             " below the crossing, " + std::to_string(violations) + " violations, " + std::to_string(strict) +
             " strict";
  return o;
}

Outcome instability(const SharedRuns& with_tis, const SharedRuns& without_tis) {
  Outcome o;
  std::string text;
  for (std::size_t i = 0; i < with_tis.runs.size(); ++i) {
    const auto& on = with_tis.runs[i].result.rows;
    const auto& off = without_tis.runs[i].result.rows;
    const double r_on = column_max(on, "max_ratio"), r_off = column_max(off, "max_ratio");
    const double c_on = column_max(on, "clip_fraction"), c_off = column_max(off, "clip_fraction");
    const std::string seed = std::to_string(with_tis.runs[i].seed);
    o.require(r_off > r_on, "seed " + seed + ": max ratio without TIS not higher");
    o.require(c_off > c_on, "seed " + seed + ": peak clip fraction without TIS not higher");
    text += " s" + seed + " ratio " + fmt("%.2f", r_off) + "/" + fmt("%.2f", r_on) + " clip " + fmt("%.3f", c_off) +
            "/" + fmt("%.3f", c_on);
  }
  o.detail = (o.pass ? std::string() : o.detail + ";") + " off/on:" + text;
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "ead_acceptance_determinism";
  fs::remove_all(root);
  std::vector<ExperimentConfig> configs;
  for (const char* name : {"sum_mod_fixed", "any_pair_ead", "grpo_mixture"}) {
    ExperimentConfig cfg = config_named(name);
    cfg.steps = 12;
    cfg.prompts_per_step = std::min<std::size_t>(cfg.prompts_per_step, 48);
    cfg.eval.every = 4;
    cfg.eval.prompts = 16;
    configs.push_back(cfg);
  }
  std::size_t compared = 0;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::string reference;
    int run = 0;
    for (std::size_t workers : {1, 4, 1, 4}) {
      ExperimentConfig cfg = configs[c];
      cfg.workers = workers;
      const fs::path dir = root / (std::to_string(c) + "_" + std::to_string(run++));
      train(cfg, dir);
      const std::string bytes = read_file(dir / "metrics.csv");
      if (reference.empty()) {
        reference = bytes;
        o.require(!bytes.empty(), "empty metrics.csv");
      } else {
        ++compared;
        o.require(bytes == reference, "metrics.csv differs for config " + std::to_string(c) + " at workers " +
                                          std::to_string(workers));
      }
    }
  }
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(compared) + " repeated runs byte-identical across workers 1 and 4";
  return o;
}

struct Report {
  std::set<int> known;
  int failures = 0;
  int unexpected = 0;

  void print(int id, const char* name, const Outcome& o, double seconds, double budget) {
    const bool in_time = seconds < budget;
    const bool ok = o.pass && in_time;
    const bool is_known = known.count(id) > 0;
    if (!ok) ++failures;
    if (ok == is_known) ++unexpected;
    std::printf("criterion %2d %-28s %s%s  %.1fs/%.0fs  %s%s\n", id, name, ok ? "PASS" : "FAIL",
                is_known ? (ok ? " (listed as known failure)" : " (known)") : "", seconds, budget, o.detail.c_str(),
                in_time ? "" : " [over time budget]");
    std::fflush(stdout);
  }

  template <class F>
  void run(int id, const char* name, double budget, F&& f) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    print(id, name, o, seconds_since(start), budget);
  }
};

}  // namespace

int main(int argc, char** argv) {
  Report report;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--known-failure" && i + 1 < argc) {
      report.known.insert(std::stoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: acceptance [--known-failure N]...\n");
      return 2;
    }
  }
  report.run(1, "schedule exactness", 1, schedule_exactness);
  report.run(2, "entropy monotonicity", 5, entropy_monotonicity);
  report.run(3, "variance inflation minimum", 10, variance_inflation_minimum);
  report.run(4, "TIS unbiasedness", 10, tis_unbiasedness);
  report.run(5, "gradient fidelity", 60, gradient_fidelity);
  report.run(6, "estimator oracles", 5, estimator_oracles);

  SharedRuns sum_mod;
  report.run(7, "learnability", 180, [&] {
    sum_mod = train_seeds(config_named("sum_mod_fixed"));
    return learnability(sum_mod);
  });

  ExplorationRuns exploration;
  report.run(8, "EAD exploration benefit", 1200, [&] {
    exploration.ead_config = config_named("any_pair_ead");
    exploration.ead = train_seeds(exploration.ead_config);
    for (double tau : {0.6, 1.0, 1.2}) {
      ExperimentConfig cfg = config_named("any_pair_fixed");
      cfg.schedule = FixedSchedule{tau};
      exploration.fixed.emplace_back(tau, train_seeds(cfg));
    }
    return exploration_benefit(exploration);
  });

  {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = entropy_dynamics(sum_mod, exploration);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    // the trained policies come from criteria 7 and 8
    report.print(9, "entropy dynamics", o, seconds_since(start) + sum_mod.seconds + exploration.ead.seconds, 300);
  }

  {
    const auto start = Clock::now();
    Outcome o;
    try {
      ExperimentConfig cfg = config_named("any_pair_ead");
      cfg.objective.tis_mode = TisMode::kOff;
      o = instability(exploration.ead, train_seeds(cfg));
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    report.print(10, "instability observability", o, seconds_since(start) + exploration.ead.seconds, 600);
  }

  report.run(11, "determinism", 300, determinism);

  std::printf("%d of 11 criteria failed, %d unexpected outcome(s)\n", report.failures, report.unexpected);
  return report.unexpected == 0 ? 0 : 1;
}
