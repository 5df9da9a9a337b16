#pragma once

// Episode driver. Step order: agent action, opponent attack, load update,
// power flow, protection scan to a fixed point, reward. Steps are indexed
// from zero; an episode runs at most episode_limit steps.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "action.hpp"
#include "chronics.hpp"
#include "grid_case.hpp"
#include "opponent.hpp"
#include "power_flow.hpp"
#include "reward.hpp"
#include "rng.hpp"
#include "topology.hpp"

namespace gridrl {

enum class FailureCause { none, divergence, islanded_slack };

inline const char* to_string(FailureCause c) {
  switch (c) {
    case FailureCause::none: return "none";
    case FailureCause::divergence: return "divergence";
    case FailureCause::islanded_slack: return "islanded_slack";
  }
  return "?";
}

struct EnvConfig {
  int episode_limit = 100;
  double rho_threshold = 0.95;
  int overflow_persistence = 2;   // consecutive overloaded steps before a soft trip
  double hard_overflow_factor = 2.0;  // instant trip at rho >= factor
  int line_cooldown = 3;          // protection lockout, steps
  double min_served_fraction = 0.7;   // below this served-load share the grid is lost
  std::uint64_t seed = 0;
  ChronicsConfig chronics;
  RewardConfig reward;
  OpponentConfig opponent;
};

struct Observation {
  Eigen::MatrixXd node_features;  // n x 6: P, Q, |V|, angle, has_gen, has_load
  std::vector<std::array<int, 2>> edges;
  double t_norm = 0.0;
  double max_rho = 0.0;
};

constexpr int kNodeFeatureDim = 6;

struct StepInfo {
  ActionClass action_class = ActionClass::none;
  RewardBreakdown reward;
  bool done = false;
  FailureCause cause = FailureCause::none;
  int cascading_trips = 0;
  std::vector<int> opponent_trips;
  std::vector<int> protection_trips;
  double max_rho = 0.0;
  double load_multiplier = 1.0;
};

struct StepRecord {
  int t = 0;
  int action = 0;
  StepInfo info;
};

class Environment {
 public:
  Environment(GridCase gc, EnvConfig cfg)
      : gc_(std::move(gc)), cfg_(std::move(cfg)), actions_(gc_) {
    cfg_.reward.rho_threshold = cfg_.rho_threshold;
    cfg_.opponent.rho_threshold = cfg_.rho_threshold;
  }

  const GridCase& grid() const { return gc_; }
  const EnvConfig& config() const { return cfg_; }
  const ActionSpace& action_space() const { return actions_; }
  int t() const { return t_; }
  bool alive() const { return alive_; }
  FailureCause failure_cause() const { return cause_; }
  const Topology& topology() const { return topo_; }
  const PowerFlowSolution& solution() const { return sol_; }
  const Observation& observation() const { return obs_; }
  int cumulative_cascades() const { return cumulative_cascades_; }
  double episode_reward() const { return episode_reward_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  std::vector<std::uint8_t> legal_mask() const { return actions_.legal_mask(topo_, t_); }

  // initial_outage lines start disconnected and stay locked for the whole
  // episode; returns false when the starting grid already cannot be served
  bool reset(const std::vector<int>& initial_outage = {}) {
    topo_ = Topology::identity(gc_);
    for (int line : initial_outage) {
      topo_.line_status[line] = 0;
      topo_.lockout_until[line] = cfg_.episode_limit + 1;
    }
    t_ = 0;
    alive_ = true;
    cause_ = FailureCause::none;
    episode_reward_ = 0.0;
    cumulative_cascades_ = 0;
    overflow_counters_.assign(gc_.lines.size(), 0);
    trace_.clear();
    opponent_rng_.seed(mix_seed(cfg_.seed, 0x6f70706fULL));
    chronics_seed_ = mix_seed(cfg_.seed, 0x63726f6eULL);
    have_warm_ = false;

    const double m = chronics_multiplier(chronics_seed_, 0, cfg_.chronics);
    if (!solve_and_check(scaled_injections(gc_, m))) return false;
    last_multiplier_ = m;
    rebuild_observation();
    return true;
  }

  StepInfo step(int action_index) { return step(actions_.decode(action_index), action_index); }

  StepInfo step(const Action& action) { return step(action, actions_.encode(action)); }

 private:
  StepInfo step(const Action& action, int action_index) {
    StepInfo info;
    if (!alive_) {
      info.done = true;
      info.cause = cause_;
      return info;
    }

    // 1. agent action; illegal requests degrade to a scored no-op
    if (action.kind == ActionKind::do_nothing) {
      info.action_class = ActionClass::none;
    } else if (!actions_.legal(action, topo_, t_)) {
      info.action_class = ActionClass::illegal;
    } else {
      info.action_class = ActionClass::minimal;
      apply_action(action);
    }

    // 2. opponent attack on the loading seen at decision time
    if (cfg_.opponent.enabled && should_attack(t_, cfg_.opponent)) {
      info.opponent_trips = opponent_action(sol_.rho, topo_, cfg_.opponent, opponent_rng_);
      for (int line : info.opponent_trips) {
        topo_.line_status[line] = 0;
        topo_.lockout_until[line] =
            std::max(topo_.lockout_until[line], t_ + 1 + cfg_.opponent.attack_duration);
      }
    }

    // 3. exogenous load and dispatch for this step
    const double m = chronics_multiplier(chronics_seed_, t_, cfg_.chronics);
    info.load_multiplier = m;
    const Injections inj = scaled_injections(gc_, m);

    // 4. solve, 5. let protection ride to a fixed point
    if (solve_and_check(inj)) {
      last_multiplier_ = m;
      run_protection_scan(inj, info);
    }

    // 6. reward on the last available loading picture
    info.reward = step_reward(info.action_class, static_cast<double>(t_), sol_.rho, cfg_.reward);
    episode_reward_ += info.reward.total;
    cumulative_cascades_ += info.cascading_trips;
    update_overflow_counters();

    // 7. terminal bookkeeping
    if (!alive_) {
      info.done = true;
      info.cause = cause_;
    } else if (t_ + 1 >= cfg_.episode_limit) {
      info.done = true;
    }
    info.max_rho = max_rho();

    trace_.push_back({t_, action_index, info});
    ++t_;
    if (alive_) rebuild_observation();
    return info;
  }

  void apply_action(const Action& a) {
    switch (a.kind) {
      case ActionKind::reconnect: topo_.line_status[a.target] = 1; break;
      case ActionKind::disconnect: topo_.line_status[a.target] = 0; break;
      case ActionKind::toggle_split:
        if (actions_.substation_is_split(topo_, a.target))
          actions_.apply_unify(topo_, a.target);
        else
          actions_.apply_split(topo_, a.target);
        break;
      default: break;
    }
  }

  // solves into sol_; on failure marks the episode dead and keeps the last
  // loading picture for reward accounting
  bool solve_and_check(const Injections& inj) {
    SolverOptions opt;
    PowerFlowSolution attempt =
        solve_power_flow(gc_, topo_, inj, opt, have_warm_ ? &warm_ : nullptr);
    if (attempt.status == SolveStatus::diverged && have_warm_)
      attempt = solve_power_flow(gc_, topo_, inj, opt, nullptr);

    if (attempt.status == SolveStatus::diverged) {
      alive_ = false;
      cause_ = FailureCause::divergence;
      return false;
    }
    if (attempt.status == SolveStatus::islanded_slack) {
      alive_ = false;
      cause_ = FailureCause::islanded_slack;
      return false;
    }

    sol_ = std::move(attempt);
    warm_ = warm_from_solution(gc_, sol_);
    have_warm_ = true;

    double total_load = 0.0;
    for (double p : inj.load_p_mw) total_load += p;
    if (total_load > 0.0 && sol_.served_load_mw < cfg_.min_served_fraction * total_load) {
      alive_ = false;
      cause_ = FailureCause::islanded_slack;
      return false;
    }
    return true;
  }

  void run_protection_scan(const Injections& inj, StepInfo& info) {
    while (true) {
      std::vector<int> to_trip;
      for (std::size_t i = 0; i < gc_.lines.size(); ++i) {
        if (!topo_.line_status[i]) continue;
        const bool hard = sol_.rho[i] >= cfg_.hard_overflow_factor;
        const bool soft =
            sol_.rho[i] > 1.0 && overflow_counters_[i] + 1 >= cfg_.overflow_persistence;
        if (hard || soft) to_trip.push_back(static_cast<int>(i));
      }
      if (to_trip.empty()) return;
      for (int line : to_trip) {
        topo_.line_status[line] = 0;
        topo_.lockout_until[line] =
            std::max(topo_.lockout_until[line], t_ + 1 + cfg_.line_cooldown);
        info.protection_trips.push_back(line);
      }
      info.cascading_trips += static_cast<int>(to_trip.size());
      if (!solve_and_check(inj)) return;
    }
  }

  void update_overflow_counters() {
    for (std::size_t i = 0; i < gc_.lines.size(); ++i)
      overflow_counters_[i] =
          topo_.line_status[i] && sol_.rho[i] > 1.0 ? overflow_counters_[i] + 1 : 0;
  }

  double max_rho() const {
    double m = 0.0;
    for (double r : sol_.rho) m = std::max(m, r);
    return m;
  }

  void rebuild_observation() {
    const Injections inj = scaled_injections(gc_, last_multiplier_);
    const LiveGraph& lg = sol_.graph;
    obs_.node_features = Eigen::MatrixXd::Zero(lg.node_count, kNodeFeatureDim);
    for (std::size_t g = 0; g < gc_.generators.size(); ++g) {
      const int node = lg.node_of_gen[g];
      if (node < 0) continue;
      obs_.node_features(node, 0) += inj.gen_p_mw[g] / gc_.base_mva;
      obs_.node_features(node, 1) += sol_.gen_q_mvar[g] / gc_.base_mva;
      obs_.node_features(node, 4) = 1.0;
    }
    for (std::size_t l = 0; l < gc_.loads.size(); ++l) {
      const int node = lg.node_of_load[l];
      if (node < 0) continue;
      obs_.node_features(node, 0) -= inj.load_p_mw[l] / gc_.base_mva;
      obs_.node_features(node, 1) -= inj.load_q_mvar[l] / gc_.base_mva;
      obs_.node_features(node, 5) = 1.0;
    }
    for (int n = 0; n < lg.node_count; ++n) {
      obs_.node_features(n, 2) = sol_.v_mag[n];
      obs_.node_features(n, 3) = sol_.v_ang[n];
    }
    obs_.edges.clear();
    for (const auto& [a, b] : lg.edges) obs_.edges.push_back({a, b});
    obs_.t_norm = static_cast<double>(t_) / cfg_.episode_limit;
    obs_.max_rho = max_rho();
  }

  GridCase gc_;
  EnvConfig cfg_;
  ActionSpace actions_;

  Topology topo_;
  PowerFlowSolution sol_;
  Observation obs_;
  WarmStart warm_;
  bool have_warm_ = false;
  double last_multiplier_ = 1.0;
  std::vector<int> overflow_counters_;
  int t_ = 0;
  bool alive_ = false;
  FailureCause cause_ = FailureCause::none;
  double episode_reward_ = 0.0;
  int cumulative_cascades_ = 0;
  std::mt19937_64 opponent_rng_;
  std::uint64_t chronics_seed_ = 0;
  std::vector<StepRecord> trace_;
};

}  // namespace gridrl
