#pragma once

// Step reward: action cost + survival bonus + overload penalty.

#include <cmath>
#include <vector>

namespace gridrl {

enum class ActionClass { none, minimal, illegal };

struct RewardConfig {
  double action_none = 1.0;      // doing nothing is the cheapest choice
  double action_minimal = 0.2;   // a single switching operation
  double action_illegal = -0.3;  // rejected request, substituted by a no-op
  double survival_alpha = 0.5;
  double overload_beta = 0.1;
  double rho_threshold = 0.95;
};

inline double action_reward(ActionClass cls, const RewardConfig& cfg) {
  switch (cls) {
    case ActionClass::none: return cfg.action_none;
    case ActionClass::minimal: return cfg.action_minimal;
    default: return cfg.action_illegal;
  }
}

inline double survival_reward(double t, const RewardConfig& cfg) {
  return cfg.survival_alpha * std::log(t + 1.0);
}

inline double overload_penalty(const std::vector<double>& rho, const RewardConfig& cfg) {
  int over = 0;
  for (double r : rho) over += r > cfg.rho_threshold;
  return -cfg.overload_beta * over;
}

struct RewardBreakdown {
  double action = 0.0;
  double survival = 0.0;
  double overload = 0.0;
  double total = 0.0;
};

inline RewardBreakdown step_reward(ActionClass cls, double t, const std::vector<double>& rho,
                                   const RewardConfig& cfg) {
  RewardBreakdown r;
  r.action = action_reward(cls, cfg);
  r.survival = survival_reward(t, cfg);
  r.overload = overload_penalty(rho, cfg);
  r.total = r.action + r.survival + r.overload;
  return r;
}

}  // namespace gridrl
