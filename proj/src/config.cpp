#include "ead/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string_view>

namespace ead {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + std::string(where) + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in '" + std::string(where) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string_view origin_name(AnnealOrigin o) { return o == AnnealOrigin::kAtWarmup ? "at_c" : "at_zero"; }

AnnealOrigin parse_origin(std::string_view name) {
  if (name == "at_c") return AnnealOrigin::kAtWarmup;
  if (name == "at_zero") return AnnealOrigin::kAtZero;
  throw std::invalid_argument("config: anneal_origin must be 'at_c' or 'at_zero'");
}

ordered_json cap_to_json(double cap) {
  if (std::isinf(cap)) return "inf";
  return cap;
}

double cap_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("config: tis_cap must be a number or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

void ExperimentConfig::validate() const {
  tasks.validate();
  ead::validate(schedule);
  ead::validate(eval.schedule);
  objective.validate();
  if (embed == 0 || hidden == 0) throw std::invalid_argument("config: model dims must be >= 1");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("config: init_scale must be >= 0");
  if (readout_init_scale && !(*readout_init_scale >= 0.0)) {
    throw std::invalid_argument("config: readout_init_scale must be >= 0");
  }
  if (group_size == 0) throw std::invalid_argument("config: group_size must be >= 1");
  if (prompts_per_step == 0) throw std::invalid_argument("config: prompts_per_step must be >= 1");
  if (mini_batches == 0 || mini_batches > prompts_per_step) {
    throw std::invalid_argument("config: mini_batches must lie in [1, prompts_per_step]");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
  if (max_len == 0) throw std::invalid_argument("config: max_len must be >= 1");
  if (eval.samples == 0 || eval.prompts == 0) throw std::invalid_argument("config: eval samples/prompts must be >= 1");
  if (workers == 0) throw std::invalid_argument("config: workers must be >= 1");
}

ordered_json schedule_to_json(const Schedule& schedule) {
  ordered_json j;
  if (const auto* fixed = std::get_if<FixedSchedule>(&schedule)) {
    j["kind"] = "fixed";
    j["tau"] = fixed->tau;
    return j;
  }
  const auto& a = std::get<AnnealSchedule>(schedule);
  j["kind"] = "anneal";
  j["tau_max"] = a.tau_max;
  j["tau_min"] = a.tau_min;
  j["d0"] = a.d0;
  j["c"] = a.warmup;
  j["step_slope"] = a.step_slope;
  j["d_cap"] = a.d_cap;
  j["anneal_origin"] = origin_name(a.origin);
  return j;
}

Schedule schedule_from_json(const json& j) {
  const std::string kind = j.value("kind", "anneal");
  if (kind == "fixed") {
    check_keys(j, {"kind", "tau"}, "schedule");
    FixedSchedule f;
    read(j, "tau", f.tau);
    f.validate();
    return f;
  }
  if (kind != "anneal") throw std::invalid_argument("config: schedule kind must be 'anneal' or 'fixed'");
  check_keys(j, {"kind", "tau_max", "tau_min", "d0", "c", "step_slope", "d_cap", "anneal_origin"}, "schedule");
  AnnealSchedule a;
  read(j, "tau_max", a.tau_max);
  read(j, "tau_min", a.tau_min);
  read(j, "d0", a.d0);
  read(j, "c", a.warmup);
  read(j, "step_slope", a.step_slope);
  read(j, "d_cap", a.d_cap);
  if (j.contains("anneal_origin")) a.origin = parse_origin(j.at("anneal_origin").get<std::string>());
  a.validate();
  return a;
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  ordered_json tasks = ordered_json::object();
  for (const auto& [kind, w] : cfg.tasks.weights) tasks[std::string(to_string(kind))] = w;
  j["tasks"] = tasks;
  j["model"] = {{"embed", cfg.embed}, {"hidden", cfg.hidden}, {"init_scale", cfg.init_scale}};
  if (cfg.readout_init_scale) j["model"]["readout_init_scale"] = *cfg.readout_init_scale;
  j["schedule"] = schedule_to_json(cfg.schedule);
  const auto& o = cfg.objective;
  j["objective"] = {{"kind", to_string(o.kind)},
                    {"eps_low", o.eps_low},
                    {"eps_high", o.eps_high},
                    {"tis_mode", to_string(o.tis_mode)},
                    {"tis_cap", cap_to_json(o.tis_cap)},
                    {"kl_coeff", o.kl_coeff},
                    {"std_floor", o.std_floor},
                    {"dynamic_sampling", o.dynamic_sampling}};
  j["group_size"] = cfg.group_size;
  j["prompts_per_step"] = cfg.prompts_per_step;
  j["mini_batches"] = cfg.mini_batches;
  j["learning_rate"] = cfg.learning_rate;
  j["steps"] = cfg.steps;
  j["max_len"] = cfg.max_len;
  j["eval"] = {{"every", cfg.eval.every},
               {"samples", cfg.eval.samples},
               {"prompts", cfg.eval.prompts},
               {"schedule", schedule_to_json(cfg.eval.schedule)},
               {"rollout_log", cfg.eval.rollout_log}};
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"seed", "tasks", "model", "schedule", "objective", "group_size", "prompts_per_step",
              "mini_batches", "learning_rate", "steps", "max_len", "eval", "checkpoint_every", "workers",
              "output_dir"},
             "config");
  ExperimentConfig cfg;
  read(j, "seed", cfg.seed);
  if (j.contains("tasks")) {
    const auto& t = j.at("tasks");
    if (!t.is_object() || t.empty()) throw std::invalid_argument("config: 'tasks' must map task kinds to weights");
    cfg.tasks.weights.clear();
    for (const auto& item : t.items()) {
      cfg.tasks.weights.emplace_back(parse_task_kind(item.key()), item.value().get<double>());
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"embed", "hidden", "init_scale", "readout_init_scale"}, "model");
    read(m, "embed", cfg.embed);
    read(m, "hidden", cfg.hidden);
    read(m, "init_scale", cfg.init_scale);
    if (m.contains("readout_init_scale")) cfg.readout_init_scale = m.at("readout_init_scale").get<double>();
  }
  if (j.contains("schedule")) cfg.schedule = schedule_from_json(j.at("schedule"));
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    check_keys(o, {"kind", "eps_low", "eps_high", "tis_mode", "tis_cap", "kl_coeff", "std_floor", "dynamic_sampling"},
               "objective");
    if (o.contains("kind")) cfg.objective.kind = parse_objective_kind(o.at("kind").get<std::string>());
    read(o, "eps_low", cfg.objective.eps_low);
    read(o, "eps_high", cfg.objective.eps_high);
    if (o.contains("tis_mode")) cfg.objective.tis_mode = parse_tis_mode(o.at("tis_mode").get<std::string>());
    if (o.contains("tis_cap")) cfg.objective.tis_cap = cap_from_json(o.at("tis_cap"));
    read(o, "kl_coeff", cfg.objective.kl_coeff);
    read(o, "std_floor", cfg.objective.std_floor);
    read(o, "dynamic_sampling", cfg.objective.dynamic_sampling);
  }
  read(j, "group_size", cfg.group_size);
  read(j, "prompts_per_step", cfg.prompts_per_step);
  read(j, "mini_batches", cfg.mini_batches);
  read(j, "learning_rate", cfg.learning_rate);
  read(j, "steps", cfg.steps);
  read(j, "max_len", cfg.max_len);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"every", "samples", "prompts", "schedule", "rollout_log"}, "eval");
    read(e, "every", cfg.eval.every);
    read(e, "samples", cfg.eval.samples);
    read(e, "prompts", cfg.eval.prompts);
    read(e, "rollout_log", cfg.eval.rollout_log);
    if (e.contains("schedule")) cfg.eval.schedule = schedule_from_json(e.at("schedule"));
  }
  read(j, "checkpoint_every", cfg.checkpoint_every);
  read(j, "workers", cfg.workers);
  read(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ead
