#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "ead/config.hpp"
#include "ead/distribution.hpp"
#include "ead/metrics.hpp"
#include "ead/runner.hpp"
#include "ead/schedule.hpp"
#include "ead/tasks.hpp"

namespace py = pybind11;

namespace {

// One list of correctness flags (and optionally answers) per prompt.
ead::EvalBatch to_batch(const std::vector<std::vector<bool>>& correct,
                        const std::optional<std::vector<std::vector<std::string>>>& answers) {
  ead::EvalBatch batch;
  for (std::size_t p = 0; p < correct.size(); ++p) {
    ead::PromptSamples s;
    s.correct = correct[p];
    if (answers) {
      s.answers = answers->at(p);
    } else {
      for (std::size_t i = 0; i < s.correct.size(); ++i) s.answers.push_back(s.correct[i] ? "correct" : std::to_string(i));
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

ead::Verdict verify_tokens(const ead::TaskInstance& instance, const std::vector<int>& response) {
  const ead::TokenSequence tokens(response.begin(), response.end());
  return ead::verify(instance, tokens);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Annealed-temperature RLVR core";

  py::class_<ead::AnnealSchedule>(m, "AnnealSchedule")
      .def(py::init([](double tau_max, double tau_min, double d0, std::size_t c, double step_slope) {
             ead::AnnealSchedule s;
             s.tau_max = tau_max;
             s.tau_min = tau_min;
             s.d0 = d0;
             s.warmup = c;
             s.step_slope = step_slope;
             s.validate();
             return s;
           }),
           py::arg("tau_max") = 1.2, py::arg("tau_min") = 0.1, py::arg("d0") = 25.0, py::arg("c") = 0,
           py::arg("step_slope") = 5.0)
      .def_readonly("tau_max", &ead::AnnealSchedule::tau_max)
      .def_readonly("tau_min", &ead::AnnealSchedule::tau_min)
      .def_readonly("d0", &ead::AnnealSchedule::d0)
      .def_readonly("c", &ead::AnnealSchedule::warmup)
      .def_readonly("step_slope", &ead::AnnealSchedule::step_slope);

  py::class_<ead::FixedSchedule>(m, "FixedSchedule")
      .def(py::init([](double tau) {
             ead::FixedSchedule s{tau};
             s.validate();
             return s;
           }),
           py::arg("tau") = 1.0)
      .def_readonly("tau", &ead::FixedSchedule::tau);

  m.def("decay_rate", py::overload_cast<const ead::AnnealSchedule&, std::int64_t>(&ead::decay_rate),
        py::arg("schedule"), py::arg("step"));
  m.def("temperature_at", py::overload_cast<const ead::AnnealSchedule&, std::size_t, double>(&ead::temperature_at),
        py::arg("schedule"), py::arg("t"), py::arg("d"));
  m.def("temperature_at", py::overload_cast<const ead::Schedule&, std::size_t, double>(&ead::temperature_at),
        py::arg("schedule"), py::arg("t"), py::arg("d"));
  m.def("schedule_trace", &ead::schedule_trace, py::arg("schedule"), py::arg("d"), py::arg("horizon"));

  m.def(
      "softmax", [](const std::vector<double>& logits, double tau) { return ead::softmax_at(logits, tau).probs; },
      py::arg("logits"), py::arg("tau") = 1.0);
  m.def(
      "token_entropy",
      [](const std::vector<double>& logits, double tau) { return ead::token_entropy(ead::softmax_at(logits, tau)); },
      py::arg("logits"), py::arg("tau") = 1.0);
  m.def(
      "entropy_beta_derivative",
      [](const std::vector<double>& logits, double beta) { return ead::entropy_beta_derivative(logits, beta); },
      py::arg("logits"), py::arg("beta"));
  m.def(
      "variance_inflation",
      [](const std::vector<double>& weights, double tau) { return ead::variance_inflation(weights, tau); },
      py::arg("weights"), py::arg("tau"));

  m.def(
      "pass_at_k",
      [](const std::vector<std::vector<bool>>& correct, std::size_t k) {
        return ead::pass_at_k(to_batch(correct, std::nullopt), k);
      },
      py::arg("correct"), py::arg("k"));
  m.def(
      "worst_at_k",
      [](const std::vector<std::vector<bool>>& correct, std::size_t k) {
        return ead::worst_at_k(to_batch(correct, std::nullopt), k);
      },
      py::arg("correct"), py::arg("k"));
  m.def(
      "majority_at_n",
      [](const std::vector<std::vector<bool>>& correct, const std::vector<std::vector<std::string>>& answers,
         std::size_t n) { return ead::majority_at_n(to_batch(correct, answers), n); },
      py::arg("correct"), py::arg("answers"), py::arg("n"));

  m.def(
      "verify_sum_mod",
      [](int a, int b, const std::vector<int>& response) {
        return verify_tokens(ead::make_sum_mod(a, b), response).reward;
      },
      py::arg("a"), py::arg("b"), py::arg("response"));
  m.def(
      "verify_any_pair",
      [](int n, const std::vector<int>& response) { return verify_tokens(ead::make_any_pair(n), response).reward; },
      py::arg("n"), py::arg("response"));

  m.def(
      "load_config", [](const std::filesystem::path& path) { return ead::to_json(ead::load_config(path)).dump(); },
      py::arg("path"), "Resolved config as a JSON string.");
  m.def(
      "train",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out) {
        ead::ExperimentConfig cfg = ead::load_config(config);
        if (seed) cfg.seed = *seed;
        ead::TrainResult result;
        {
          py::gil_scoped_release release;
          result = ead::train(cfg, out);
        }
        return result.rows;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      "Runs training; returns one dict of formatted cells per metrics row.");
}
