#include "ead/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ead/objectives.hpp"
#include "ead/rollout.hpp"

namespace ead {
namespace fs = std::filesystem;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string format_short(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

namespace {

constexpr std::size_t kPassKs[] = {1, 2, 4, 8, 16};

std::string worst_column(const ExperimentConfig& cfg) {
  return "worst@" + std::to_string(std::min<std::size_t>(16, cfg.eval.samples));
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += csv_escape(cells[i]);
  }
  return line + "\n";
}

std::string row_line(const std::vector<std::string>& columns, const MetricsRow& row) {
  std::vector<std::string> cells;
  cells.reserve(columns.size());
  for (const auto& c : columns) {
    auto it = row.find(c);
    cells.push_back(it == row.end() ? "" : it->second);
  }
  return csv_line(cells);
}

std::string json_array(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out + "]";
}

bool eval_due(const ExperimentConfig& cfg, std::size_t step) {
  if (step == cfg.steps) return true;
  return cfg.eval.every > 0 && step % cfg.eval.every == 0;
}

double decode_rate(const Schedule& schedule, std::size_t step) {
  return decay_rate(schedule, static_cast<std::int64_t>(step)).value_or(1.0);
}

// Spearman between position and mean target entropy over positions reached
// by at least 5% of the sampled responses.
double position_entropy_spearman(const EntropyProfile& profile) {
  if (profile.counts.empty()) return 0.0;
  const double min_count = std::max(1.0, 0.05 * static_cast<double>(profile.counts.front()));
  std::vector<double> pos;
  std::vector<double> ent;
  for (std::size_t t = 0; t < profile.counts.size(); ++t) {
    if (static_cast<double>(profile.counts[t]) < min_count) continue;
    pos.push_back(static_cast<double>(t));
    ent.push_back(profile.target[t]);
  }
  return spearman(pos, ent);
}

struct StepStats {
  LossReport report;
  double reward = 0.0;
  double length = 0.0;
  double behavior_entropy = 0.0;
  double target_entropy = 0.0;
  std::size_t groups_used = 0;
};

void write_failure(const fs::path& dir, std::size_t step, const std::string& reason) {
  std::ofstream out(dir / "failure.json");
  nlohmann::ordered_json j;
  j["step"] = step;
  j["reason"] = reason;
  out << j.dump(2) << "\n";
}

}  // namespace

std::vector<std::string> metrics_columns(const ExperimentConfig& cfg) {
  std::vector<std::string> cols = {"step",
                                   "decay_rate",
                                   "loss",
                                   "clip_fraction",
                                   "mean_ratio",
                                   "max_ratio",
                                   "mean_tis_weight",
                                   "max_offpolicy_ratio",
                                   "kl",
                                   "grad_norm",
                                   "mean_reward",
                                   "mean_response_length",
                                   "behavior_entropy",
                                   "target_entropy",
                                   "groups_used"};
  for (std::size_t k : kPassKs) {
    if (k <= cfg.eval.samples) cols.push_back("pass@" + std::to_string(k));
  }
  cols.push_back(worst_column(cfg));
  for (std::size_t n = 1; n <= cfg.eval.samples; ++n) cols.push_back("maj@" + std::to_string(n));
  cols.insert(cols.end(), {"mean_entropy", "eval_behavior_entropy", "eval_response_length",
                           "entropy_position_spearman", "position_entropy"});
  return cols;
}

std::vector<TaskInstance> eval_prompts(const ExperimentConfig& cfg) {
  std::vector<TaskInstance> prompts;
  prompts.reserve(cfg.eval.prompts);
  for (std::size_t j = 0; j < cfg.eval.prompts; ++j) {
    RandomStream rng = RandomStream::derive(cfg.seed, {stream::kEvalPrompts, j});
    prompts.push_back(cfg.tasks.draw(rng));
  }
  return prompts;
}

MetricsRow evaluate(const PolicyParams& params, const ExperimentConfig& cfg, std::size_t step,
                    const WorkerPool& pool) {
  const auto prompts = eval_prompts(cfg);
  const StreamKey key{cfg.seed, stream::kEvalRollouts, step, 0};
  const double d = decode_rate(cfg.eval.schedule, step);
  const EvalResult result = evaluate_prompts(params, prompts, cfg.eval.schedule, d, cfg.eval.samples,
                                             cfg.max_len, key, pool);
  MetricsRow row;
  row["step"] = std::to_string(step);
  for (std::size_t k : kPassKs) {
    if (k <= cfg.eval.samples) row["pass@" + std::to_string(k)] = format_number(pass_at_k(result.batch, k));
  }
  row[worst_column(cfg)] = format_number(worst_at_k(result.batch, std::min<std::size_t>(16, cfg.eval.samples)));
  for (std::size_t n = 1; n <= cfg.eval.samples; ++n) {
    row["maj@" + std::to_string(n)] = format_number(majority_at_n(result.batch, n));
  }
  row["mean_entropy"] = format_number(result.entropy.average_target);
  row["eval_behavior_entropy"] = format_number(result.entropy.average_behavior);
  row["eval_response_length"] = format_number(result.mean_length);
  row["entropy_position_spearman"] = format_number(position_entropy_spearman(result.entropy));
  row["position_entropy"] = json_array(result.entropy.target);
  return row;
}

TrainResult train(const ExperimentConfig& cfg, const std::optional<fs::path>& out_dir) {
  cfg.validate();
  const WorkerPool pool(cfg.workers);
  const auto columns = metrics_columns(cfg);

  RandomStream init_rng = RandomStream::derive(cfg.seed, {stream::kInit});
  TrainResult result{PolicyParams::random(cfg.dims(), init_rng, cfg.init_scale, cfg.readout_init_scale), {}};
  PolicyParams& params = result.params;
  const PolicyParams reference = params;
  AdamOptimizer optimizer(cfg.dims(), AdamConfig{cfg.learning_rate});

  std::ofstream csv;
  std::ofstream jsonl;
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::ofstream(*out_dir / "config.resolved.json") << to_json(cfg).dump(2) << "\n";
    csv.open(*out_dir / "metrics.csv", std::ios::trunc);
    jsonl.open(*out_dir / "rollouts.jsonl", std::ios::trunc);
    if (!csv || !jsonl) throw std::runtime_error("cannot write run files in " + out_dir->string());
    csv << csv_line(columns);
    save_checkpoint(*out_dir / "checkpoint_0.bin", params);
  }

  const auto prompts_eval = eval_prompts(cfg);
  auto abort_run = [&](std::size_t step, const std::string& reason) {
    if (out_dir) {
      csv.flush();
      write_failure(*out_dir, step, reason);
    }
    throw TrainingAborted(step, reason);
  };

  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    MetricsRow row;
    try {
      if (eval_due(cfg, step)) {
        row = evaluate(params, cfg, step, pool);
        if (out_dir) {
          const StreamKey key{cfg.seed, stream::kEvalRollouts, step, 0};
          const double d = decode_rate(cfg.eval.schedule, step);
          const std::size_t logged = std::min(cfg.eval.rollout_log, cfg.eval.prompts * cfg.eval.samples);
          for (std::size_t i = 0; i < logged; ++i) {
            StreamKey k = key;
            k.prompt = i / cfg.eval.samples;
            RandomStream rng = k.stream(i % cfg.eval.samples);
            const Rollout r = generate(params, prompts_eval[k.prompt], cfg.eval.schedule, d, cfg.max_len, rng);
            jsonl << to_jsonl(r, static_cast<std::int64_t>(step)) << "\n";
          }
        }
      }
      row["step"] = std::to_string(step);

      if (step < cfg.steps) {
        const auto d_opt = decay_rate(cfg.schedule, static_cast<std::int64_t>(step));
        const double d = d_opt.value_or(1.0);
        if (d_opt) row["decay_rate"] = format_number(*d_opt);

        std::vector<TaskInstance> prompts;
        prompts.reserve(cfg.prompts_per_step);
        for (std::size_t i = 0; i < cfg.prompts_per_step; ++i) {
          RandomStream rng = RandomStream::derive(cfg.seed, {stream::kTrainPrompts, step, i});
          prompts.push_back(cfg.tasks.draw(rng));
        }

        std::vector<RolloutGroup> groups(prompts.size());
        std::vector<std::pair<double, double>> entropy(prompts.size());  // behavior, target sums
        pool.parallel_for(prompts.size(), [&](std::size_t i) {
          auto& [hb, ht] = entropy[i];
          hb = ht = 0.0;
          groups[i] = generate_group(params, prompts[i], cfg.schedule, d, cfg.group_size, cfg.max_len,
                                     StreamKey{cfg.seed, stream::kTrainRollouts, step, i},
                                     cfg.objective.std_floor, [&](const DecodeStep& s) {
                                       hb += token_entropy(s.behavior);
                                       ht += token_entropy(s.target);
                                     });
        });

        StepStats stats;
        double tokens_total = 0.0;
        for (std::size_t i = 0; i < groups.size(); ++i) {
          double tokens = 0.0;
          for (const auto& r : groups[i].rollouts) {
            stats.reward += r.reward;
            tokens += static_cast<double>(r.tokens.size());
          }
          tokens_total += tokens;
          stats.behavior_entropy += entropy[i].first / tokens;
          stats.target_entropy += entropy[i].second / tokens;
        }
        const auto n_rollouts = static_cast<double>(groups.size() * cfg.group_size);
        stats.reward /= n_rollouts;
        stats.length = tokens_total / n_rollouts;
        stats.behavior_entropy /= static_cast<double>(groups.size());
        stats.target_entropy /= static_cast<double>(groups.size());

        if (cfg.objective.dynamic_sampling) groups = filter_informative(groups);
        stats.groups_used = groups.size();

        if (!groups.empty()) {
          const std::size_t batches = std::min(cfg.mini_batches, groups.size());
          double loss = 0.0, clip = 0.0, ratio = 0.0, tis = 0.0, kl = 0.0, grad = 0.0;
          double max_ratio = 0.0, max_off = 0.0;
          std::size_t tokens = 0;
          for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * groups.size() / batches;
            const std::size_t hi = (b + 1) * groups.size() / batches;
            const std::span<const RolloutGroup> mb(groups.data() + lo, hi - lo);
            LossResult lr = compute_loss(mb, params, reference, cfg.objective, pool);
            if (!std::isfinite(lr.report.loss)) abort_run(step, "non-finite loss");
            Gradients grads = loss_gradients(params, lr, pool);
            if (!grads.all_finite()) abort_run(step, "non-finite gradient");
            optimizer.step(params, grads);

            const auto& rep = lr.report;
            const auto nt = static_cast<double>(rep.tokens);
            loss += rep.loss * nt;
            clip += rep.clip_fraction * nt;
            ratio += rep.mean_ratio * nt;
            tis += rep.mean_tis_weight * nt;
            kl += rep.kl * nt;
            grad += rep.grad_norm;
            max_ratio = std::max(max_ratio, rep.max_ratio);
            max_off = std::max(max_off, rep.max_offpolicy_ratio);
            tokens += rep.tokens;
          }
          const auto nt = static_cast<double>(tokens);
          row["loss"] = format_number(loss / nt);
          row["clip_fraction"] = format_number(clip / nt);
          row["mean_ratio"] = format_number(ratio / nt);
          row["max_ratio"] = format_number(max_ratio);
          row["mean_tis_weight"] = format_number(tis / nt);
          row["max_offpolicy_ratio"] = format_number(max_off);
          row["kl"] = format_number(kl / nt);
          row["grad_norm"] = format_number(grad / static_cast<double>(batches));
        }
        row["mean_reward"] = format_number(stats.reward);
        row["mean_response_length"] = format_number(stats.length);
        row["behavior_entropy"] = format_number(stats.behavior_entropy);
        row["target_entropy"] = format_number(stats.target_entropy);
        row["groups_used"] = std::to_string(stats.groups_used);
      }
    } catch (const NonFiniteError& e) {
      abort_run(step, e.what());
    }

    if (out_dir) {
      csv << row_line(columns, row);
      const bool periodic = cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0;
      if (step > 0 && (periodic || step == cfg.steps)) {
        save_checkpoint(*out_dir / ("checkpoint_" + std::to_string(step) + ".bin"), params);
      }
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::vector<ForkRow> run_fork_experiment(const PolicyParams& params, const ExperimentConfig& cfg,
                                         const std::vector<std::size_t>& positions, std::size_t k,
                                         double tau_branch, const WorkerPool& pool) {
  if (k == 0) throw std::invalid_argument("fork experiment: k must be >= 1");
  const auto prompts = eval_prompts(cfg);
  const double d = decode_rate(cfg.eval.schedule, 0);

  // per prompt, per position: branch outcomes
  std::vector<std::vector<PromptSamples>> samples(prompts.size(), std::vector<PromptSamples>(positions.size()));
  std::vector<std::vector<bool>> reached(prompts.size(), std::vector<bool>(positions.size()));
  pool.parallel_for(prompts.size(), [&](std::size_t p) {
    RandomStream base_rng = StreamKey{cfg.seed, stream::kFork, 0, p}.stream(0);
    const Rollout base = generate(params, prompts[p], cfg.eval.schedule, d, cfg.max_len, base_rng);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const std::size_t pos = std::min(positions[i], base.tokens.size());
      reached[p][i] = positions[i] <= base.tokens.size();
      const auto branches = fork_generate(params, prompts[p], base, pos, k, tau_branch, cfg.max_len,
                                          StreamKey{cfg.seed, stream::kFork, 1 + i, p});
      for (const auto& b : branches) {
        samples[p][i].correct.push_back(b.reward > 0.0);
        samples[p][i].answers.push_back(b.answer);
      }
    }
  });

  std::vector<ForkRow> rows;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    ForkRow row;
    row.position = positions[i];
    EvalBatch batch;
    double distinct = 0.0;
    double reward = 0.0;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      batch.push_back(samples[p][i]);
      distinct += static_cast<double>(
          std::set<std::string>(samples[p][i].answers.begin(), samples[p][i].answers.end()).size());
      reward += static_cast<double>(samples[p][i].correct_count()) / static_cast<double>(k);
      row.branched += reached[p][i] ? 1 : 0;
    }
    row.majority = majority_at_n(batch, k);
    row.mean_distinct = distinct / static_cast<double>(prompts.size());
    row.mean_reward = reward / static_cast<double>(prompts.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<ScalingRow> run_inference_scaling(const PolicyParams& params, const ExperimentConfig& cfg,
                                              const std::vector<std::size_t>& ns,
                                              const std::vector<std::pair<std::string, Schedule>>& schedules,
                                              const WorkerPool& pool) {
  if (ns.empty()) throw std::invalid_argument("inference scaling: no N values");
  const std::size_t max_n = *std::max_element(ns.begin(), ns.end());
  if (max_n == 0) throw std::invalid_argument("inference scaling: N must be >= 1");
  const auto prompts = eval_prompts(cfg);
  std::vector<ScalingRow> rows;
  for (const auto& [name, schedule] : schedules) {
    validate(schedule);
    const double d = decode_rate(schedule, 0);
    const StreamKey key{cfg.seed, stream::kScale, 0, 0};
    const EvalResult result = evaluate_prompts(params, prompts, schedule, d, max_n, cfg.max_len, key, pool);
    for (std::size_t n : ns) {
      rows.push_back({name, n, majority_at_n(result.batch, n), pass_at_k(result.batch, n)});
    }
  }
  return rows;
}

std::string dump_schedule(const ExperimentConfig& cfg, const std::vector<double>& decay_rates,
                          std::size_t horizon) {
  if (decay_rates.empty()) throw std::invalid_argument("dump_schedule: no decay rates given");
  std::vector<std::vector<double>> traces;
  std::vector<std::string> header = {"t"};
  for (double d : decay_rates) {
    traces.push_back(schedule_trace(cfg.schedule, d, horizon));
    header.push_back("d=" + format_short(d));
  }
  std::string out = csv_line(header);
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<std::string> cells = {std::to_string(t)};
    for (const auto& trace : traces) cells.push_back(format_number(trace[t]));
    out += csv_line(cells);
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (any) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_runs(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.size() < 2) throw std::invalid_argument("compare: need at least two run directories");

  struct Run {
    std::string name;
    std::vector<std::string> header;
    std::map<long long, std::vector<std::string>> by_step;
    std::set<long long> eval_steps;
  };
  std::vector<Run> runs;
  std::map<std::string, int> name_uses;
  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) throw std::runtime_error("compare: run directory not found: " + dir.string());
    std::ifstream in(dir / "metrics.csv");
    if (!in) throw std::runtime_error("compare: missing metrics.csv in " + dir.string());
    std::stringstream buf;
    buf << in.rdbuf();
    auto table = parse_csv(buf.str());
    if (table.empty()) throw std::runtime_error("compare: empty metrics.csv in " + dir.string());

    Run run;
    std::string base = fs::path(dir).lexically_normal().filename().string();
    if (base.empty()) base = fs::path(dir).lexically_normal().parent_path().filename().string();
    const int use = ++name_uses[base];
    run.name = use == 1 ? base : base + "#" + std::to_string(use);
    run.header = table.front();
    const auto step_it = std::find(run.header.begin(), run.header.end(), "step");
    const auto pass_it = std::find(run.header.begin(), run.header.end(), "pass@1");
    if (step_it == run.header.end()) throw std::runtime_error("compare: no step column in " + dir.string());
    const auto step_col = static_cast<std::size_t>(step_it - run.header.begin());
    for (std::size_t r = 1; r < table.size(); ++r) {
      auto& cells = table[r];
      cells.resize(run.header.size());
      const long long step = std::stoll(cells[step_col]);
      if (pass_it != run.header.end() && !cells[static_cast<std::size_t>(pass_it - run.header.begin())].empty()) {
        run.eval_steps.insert(step);
      }
      run.by_step[step] = std::move(cells);
    }
    runs.push_back(std::move(run));
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].eval_steps != runs[0].eval_steps) {
      throw std::runtime_error("compare: incompatible eval cadence between " + runs[0].name + " and " + runs[i].name);
    }
  }

  std::set<long long> steps;
  for (const auto& run : runs) {
    for (const auto& entry : run.by_step) steps.insert(entry.first);
  }
  std::vector<std::string> header = {"step"};
  for (const auto& run : runs) {
    for (const auto& col : run.header) {
      if (col != "step") header.push_back(col + ":" + run.name);
    }
  }
  std::string out = csv_line(header);
  for (long long step : steps) {
    std::vector<std::string> cells = {std::to_string(step)};
    for (const auto& run : runs) {
      const auto it = run.by_step.find(step);
      for (std::size_t c = 0; c < run.header.size(); ++c) {
        if (run.header[c] == "step") continue;
        cells.push_back(it == run.by_step.end() ? "" : it->second[c]);
      }
    }
    out += csv_line(cells);
  }
  return out;
}

std::string fork_csv(const std::vector<ForkRow>& rows, std::size_t k) {
  std::string out = csv_line({"branch_position", "maj@" + std::to_string(k), "mean_distinct_answers",
                              "mean_reward", "prompts_reaching_position"});
  for (const auto& r : rows) {
    out += csv_line({std::to_string(r.position), format_number(r.majority), format_number(r.mean_distinct),
                     format_number(r.mean_reward), std::to_string(r.branched)});
  }
  return out;
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::string out = csv_line({"schedule", "n", "maj@n", "pass@n"});
  for (const auto& r : rows) {
    out += csv_line({r.schedule, std::to_string(r.n), format_number(r.majority), format_number(r.pass)});
  }
  return out;
}

}  // namespace ead
