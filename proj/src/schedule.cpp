#include "ead/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ead {

void AnnealSchedule::validate() const {
  if (!(tau_min > 0.0)) throw std::invalid_argument("anneal schedule: tau_min must be > 0");
  if (!(tau_max > 0.0)) throw std::invalid_argument("anneal schedule: tau_max must be > 0");
  if (tau_min > tau_max) throw std::invalid_argument("anneal schedule: tau_min must be <= tau_max");
  if (!(d0 >= 1.0)) throw std::invalid_argument("anneal schedule: d0 must be >= 1");
  if (!(step_slope >= 0.0)) throw std::invalid_argument("anneal schedule: step_slope must be >= 0");
  if (!(d_cap >= d0)) throw std::invalid_argument("anneal schedule: d_cap must be >= d0");
}

void FixedSchedule::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("fixed schedule: tau must be > 0");
}

void validate(const Schedule& schedule) {
  std::visit([](const auto& s) { s.validate(); }, schedule);
}

double decay_rate(const AnnealSchedule& schedule, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("decay_rate: step must be >= 0");
  return std::min(schedule.d0 + schedule.step_slope * static_cast<double>(step), schedule.d_cap);
}

std::optional<double> decay_rate(const Schedule& schedule, std::int64_t step) {
  if (const auto* anneal = std::get_if<AnnealSchedule>(&schedule)) {
    return decay_rate(*anneal, step);
  }
  return std::nullopt;
}

double temperature_at(const AnnealSchedule& schedule, std::size_t t, double d) {
  if (!(d >= 1.0)) throw std::invalid_argument("temperature_at: decay rate must be >= 1");
  if (t < schedule.warmup) return 1.0;
  const std::size_t clock = schedule.origin == AnnealOrigin::kAtWarmup ? t - schedule.warmup : t;
  const double tau = 1.0 + schedule.tau_max - std::exp(static_cast<double>(clock) / d);
  // exp(.) >= 1, so the min only absorbs the rounding of 1 + tau_max - 1
  return std::clamp(tau, schedule.tau_min, schedule.tau_max);
}

double temperature_at(const Schedule& schedule, std::size_t t, double d) {
  if (const auto* fixed = std::get_if<FixedSchedule>(&schedule)) return fixed->tau;
  return temperature_at(std::get<AnnealSchedule>(schedule), t, d);
}

double floor_position(const AnnealSchedule& schedule, double d) {
  const double clock = d * std::log(1.0 + schedule.tau_max - schedule.tau_min);
  return schedule.origin == AnnealOrigin::kAtWarmup
             ? clock + static_cast<double>(schedule.warmup)
             : std::max(clock, static_cast<double>(schedule.warmup));
}

std::vector<double> schedule_trace(const Schedule& schedule, double d, std::size_t horizon) {
  if (horizon == 0) throw std::invalid_argument("schedule_trace: horizon must be >= 1");
  std::vector<double> trace(horizon);
  for (std::size_t t = 0; t < horizon; ++t) trace[t] = temperature_at(schedule, t, d);
  return trace;
}

}  // namespace ead
