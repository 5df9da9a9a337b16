#pragma once

// Load and dispatch time series: a sinusoidal daily profile with bounded
// deterministic noise, applied as one multiplier to every load and every
// non-slack setpoint. The slack machine absorbs the residual.

#include <cmath>
#include <numbers>

#include "power_flow.hpp"
#include "rng.hpp"

namespace gridrl {

struct ChronicsConfig {
  double load_scale = 1.0;
  double daily_amplitude = 0.05;
  double noise_amplitude = 0.02;
  int period_steps = 288;
};

inline double chronics_multiplier(std::uint64_t seed, int t, const ChronicsConfig& cfg) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / cfg.period_steps;
  const double noise = cfg.noise_amplitude > 0.0
                           ? symmetric_noise(seed, static_cast<std::uint64_t>(t), cfg.noise_amplitude)
                           : 0.0;
  return cfg.load_scale * (1.0 + cfg.daily_amplitude * std::sin(phase) + noise);
}

inline Injections scaled_injections(const GridCase& gc, double multiplier) {
  Injections inj = nominal_injections(gc);
  for (auto& p : inj.gen_p_mw) p *= multiplier;
  for (auto& p : inj.load_p_mw) p *= multiplier;
  for (auto& q : inj.load_q_mvar) q *= multiplier;
  return inj;
}

}  // namespace gridrl
