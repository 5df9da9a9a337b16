#pragma once

// Adversarial line tripper. On its schedule it takes out every highly loaded
// attackable line; when none qualifies it falls back to one random in-service
// target (or, with the literal fallback, to the whole attackable set).

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "topology.hpp"

namespace gridrl {

enum class OpponentMode { all_high, single_max };

struct OpponentConfig {
  bool enabled = false;
  int tau_attack = 1;               // attacks when t % tau_attack == 0
  std::vector<int> attackable;      // line ids; empty means every line
  double rho_threshold = 0.95;      // "highly loaded" cutoff, inclusive
  OpponentMode mode = OpponentMode::all_high;
  int attack_duration = 10;         // steps a victim stays locked out
  bool literal_fallback = false;    // no high line: hit the whole attackable set
};

inline bool should_attack(int t, const OpponentConfig& cfg) {
  return cfg.tau_attack > 0 && t % cfg.tau_attack == 0;
}

inline std::vector<int> attackable_in_service(const OpponentConfig& cfg, const Topology& topo) {
  std::vector<int> out;
  if (cfg.attackable.empty()) {
    for (std::size_t i = 0; i < topo.line_status.size(); ++i)
      if (topo.line_status[i]) out.push_back(static_cast<int>(i));
  } else {
    for (int i : cfg.attackable)
      if (i >= 0 && i < static_cast<int>(topo.line_status.size()) && topo.line_status[i])
        out.push_back(i);
  }
  return out;
}

inline std::vector<int> highly_loaded(const std::vector<double>& rho, const OpponentConfig& cfg,
                                      const Topology& topo) {
  std::vector<int> high;
  for (int i : attackable_in_service(cfg, topo))
    if (rho[i] >= cfg.rho_threshold) high.push_back(i);
  return high;
}

// lines the opponent trips this step; empty when nothing is attackable
inline std::vector<int> opponent_action(const std::vector<double>& rho, const Topology& topo,
                                        const OpponentConfig& cfg, std::mt19937_64& rng) {
  const std::vector<int> candidates = attackable_in_service(cfg, topo);
  if (candidates.empty()) return {};
  const std::vector<int> high = highly_loaded(rho, cfg, topo);

  if (!high.empty()) {
    if (cfg.mode == OpponentMode::all_high) return high;
    int best = high[0];
    for (int i : high)
      if (rho[i] > rho[best]) best = i;  // ties keep the lowest id
    return {best};
  }
  if (cfg.literal_fallback) return candidates;
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return {candidates[pick(rng)]};
}

}  // namespace gridrl
