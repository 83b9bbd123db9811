#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace ead {

/// Where the exponential clock of the annealing schedule starts.
///  kAtWarmup: t' = t - c, so the first annealed token is sampled at exactly tau_max.
///  kAtZero:   t' = t, the clock runs through the warm-up window.
enum class AnnealOrigin { kAtWarmup, kAtZero };

/// Per-token annealed temperature policy.
///
/// For a generated position t (prompt tokens are never counted):
///   tau_t = 1                                        if t < c
///   tau_t = max(1 + tau_max - exp(t' / d), tau_min)  otherwise
/// with the decay rate d refreshed per optimizer step as
///   d_s = min(d0 + step_slope * s, d_cap).
struct AnnealSchedule {
  double tau_max = 1.2;
  double tau_min = 0.1;
  double d0 = 25.0;
  std::size_t warmup = 0;  // c
  double step_slope = 5.0;
  double d_cap = 40000.0;
  AnnealOrigin origin = AnnealOrigin::kAtWarmup;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Constant sampling temperature, the baseline decoder.
struct FixedSchedule {
  double tau = 1.0;

  void validate() const;
};

using Schedule = std::variant<AnnealSchedule, FixedSchedule>;

void validate(const Schedule& schedule);

double decay_rate(const AnnealSchedule& schedule, std::int64_t step);

/// Decay rate for the step, or nullopt for a fixed-temperature schedule.
std::optional<double> decay_rate(const Schedule& schedule, std::int64_t step);

double temperature_at(const AnnealSchedule& schedule, std::size_t t, double d);

/// For a fixed schedule `d` is ignored.
double temperature_at(const Schedule& schedule, std::size_t t, double d);

/// First generated position at which the tau_min floor binds (real-valued,
/// in generated-token units).
double floor_position(const AnnealSchedule& schedule, double d);

std::vector<double> schedule_trace(const Schedule& schedule, double d,
                                   std::size_t horizon);

}  // namespace ead
