#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gridrl/environment.hpp>
#include <gridrl/neural.hpp>
#include <gridrl/policy.hpp>
#include <gridrl/rng.hpp>

namespace gridrl {

struct PpoPolicyHyper {
  double learning_rate = 1e-4;
  double entropy_coef = 1e-3;
  double discount = 0.999;
};

struct PpoConfig {
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  int epochs_per_update = 4;
  int minibatch_size = 64;
  int rollout_length = 2048;
  bool normalize_advantages = true;
  PpoPolicyHyper general{1e-4, 1e-3, 0.999};
  PpoPolicyHyper critical{1e-3, 5e-4, 0.999};
};

// hyperparameter table read exactly as printed instead of with the
// entropy/gamma rows transposed
inline PpoConfig raw_table_config() {
  PpoConfig cfg;
  cfg.general = {1e-4, 0.999, 1e-3};
  cfg.critical = {1e-3, 0.999, 5e-4};
  return cfg;
}

inline void validate(const PpoConfig& cfg) {
  if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0))
    throw std::invalid_argument("clip_epsilon must lie in (0, 1)");
  if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda <= 1.0))
    throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  if (cfg.epochs_per_update < 1) throw std::invalid_argument("epochs_per_update must be >= 1");
  if (cfg.minibatch_size < 1) throw std::invalid_argument("minibatch_size must be >= 1");
  if (cfg.rollout_length < 1) throw std::invalid_argument("rollout_length must be >= 1");
  for (const PpoPolicyHyper& h : {cfg.general, cfg.critical}) {
    if (!(h.discount > 0.0 && h.discount <= 1.0))
      throw std::invalid_argument("discount must lie in (0, 1]");
    if (!(h.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (h.entropy_coef < 0.0) throw std::invalid_argument("entropy_coef must be non-negative");
  }
}

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Transition {
  Observation observation;
  std::vector<std::uint8_t> mask;
  int action = 0;
  double log_prob = 0.0;
  double value_estimate = 0.0;
  double reward = 0.0;
  bool done = false;
  double next_value = 0.0;  // V(s_{t+1}) under the acting policy, 0 when done
  bool segment_end = true;  // no temporal successor later in this buffer
  double advantage = 0.0;
  double return_target = 0.0;
};

inline double clipped_surrogate(double ratio, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

inline void compute_gae(std::vector<Transition>& buffer, double discount, double lambda,
                        bool normalize = true) {
  const int n = static_cast<int>(buffer.size());
  double running = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    Transition& tr = buffer[i];
    const double carry = tr.done ? 0.0 : tr.next_value;
    const double delta = tr.reward + discount * carry - tr.value_estimate;
    const bool chained = !tr.done && !tr.segment_end && i + 1 < n;
    running = delta + (chained ? discount * lambda * running : 0.0);
    tr.advantage = running;
    tr.return_target = running + tr.value_estimate;
  }
  if (!normalize || n < 2) return;
  double mean = 0.0;
  for (const Transition& tr : buffer) mean += tr.advantage;
  mean /= n;
  double var = 0.0;
  for (const Transition& tr : buffer) var += (tr.advantage - mean) * (tr.advantage - mean);
  const double stddev = std::sqrt(var / n);
  const double scale = 1.0 / std::max(stddev, 1e-8);
  for (Transition& tr : buffer) tr.advantage = (tr.advantage - mean) * scale;
}

struct UpdateStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

struct PpoUpdateOptions {
  double learning_rate = 1e-4;
  double entropy_coef = 1e-3;
  double clip_epsilon = 0.2;
  int epochs = 4;
  int minibatch_size = 64;
};

inline UpdateStats ppo_update(const std::vector<Transition>& buffer,
                              const PolicyArchitecture& arch, PolicyParams& params,
                              AdamState& adam, const PpoUpdateOptions& opt,
                              std::mt19937_64& rng) {
  const int n = static_cast<int>(buffer.size());
  UpdateStats stats;
  if (n == 0) return stats;

  std::vector<Matrix> a_norms;
  a_norms.reserve(n);
  for (const Transition& tr : buffer)
    a_norms.push_back(normalize_adjacency(tr.observation.edges,
                                          static_cast<int>(tr.observation.node_features.rows())));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  PolicyParams grads = zeros_like_params(arch);
  ForwardTape tape;
  Vector d_logits(arch.actions);

  double surrogate_sum = 0.0, value_loss_sum = 0.0, entropy_sum = 0.0;
  long long clipped_count = 0, sample_count = 0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += opt.minibatch_size) {
      const int batch = std::min(opt.minibatch_size, n - start);
      grads.for_each([](const char*, auto& t) { t.setZero(); });
      grads.b_value = 0.0;

      for (int b = 0; b < batch; ++b) {
        const Transition& tr = buffer[order[start + b]];
        const Observation& obs = tr.observation;
        const PolicyOutput out = policy_forward(params, obs.node_features,
                                                a_norms[order[start + b]], obs.t_norm,
                                                obs.max_rho, &tape);
        const MaskedDistribution dist = masked_distribution(out.logits, tr.mask);
        const double log_prob_new = dist.log_probs(tr.action);
        const double ratio = std::exp(log_prob_new - tr.log_prob);
        const double unclipped = ratio * tr.advantage;
        const double clipped =
            std::clamp(ratio, 1.0 - opt.clip_epsilon, 1.0 + opt.clip_epsilon) * tr.advantage;
        const double surrogate = std::min(unclipped, clipped);
        const double value_error = out.value - tr.return_target;

        if (!std::isfinite(surrogate) || !std::isfinite(value_error) ||
            !std::isfinite(dist.entropy))
          throw NonFiniteLoss("non-finite loss term: surrogate=" + std::to_string(surrogate) +
                              " value_error=" + std::to_string(value_error) +
                              " entropy=" + std::to_string(dist.entropy) +
                              " ratio=" + std::to_string(ratio));

        surrogate_sum += surrogate;
        value_loss_sum += value_error * value_error;
        entropy_sum += dist.entropy;
        if (ratio < 1.0 - opt.clip_epsilon || ratio > 1.0 + opt.clip_epsilon) ++clipped_count;
        ++sample_count;

        // d(-surrogate)/d log_prob_new; zero when the clipped branch is active
        const double d_surr = (unclipped <= clipped) ? ratio * tr.advantage : 0.0;
        const double inv_batch = 1.0 / batch;
        for (int j = 0; j < arch.actions; ++j) {
          if (!tr.mask[j]) {
            d_logits(j) = 0.0;
            continue;
          }
          const double p = dist.probs(j);
          const double d_policy = ((j == tr.action) ? 1.0 : 0.0) - p;
          const double d_entropy = -p * (dist.log_probs(j) + dist.entropy);
          d_logits(j) = inv_batch * (-d_surr * d_policy - opt.entropy_coef * d_entropy);
        }
        const double d_value = inv_batch * value_error;
        policy_backward(params, tape, d_logits, d_value, grads);
      }

      if (!all_finite(grads)) throw NonFiniteLoss("non-finite gradient in minibatch");
      adam_step(params, grads, adam, opt.learning_rate);
      ++stats.minibatches;
    }
  }

  stats.surrogate = surrogate_sum / sample_count;
  stats.value_loss = value_loss_sum / sample_count;
  stats.entropy = entropy_sum / sample_count;
  stats.clip_fraction = static_cast<double>(clipped_count) / sample_count;
  return stats;
}

struct TrainSchedule {
  long long phase1_steps = 0;
  long long phase2_steps = 0;
  long long phase3_steps = 0;
  int eval_episodes = 4;
  int eval_every_updates = 1;
  long long checkpoint_every_steps = 0;
  std::string checkpoint_path;
  double heavy_load_scale = 1.25;
  int max_initial_outages = 3;
};

struct TrainResult {
  std::vector<json> log;
  long long env_steps = 0;
};

namespace detail {

inline double state_value(const DualPolicyBundle& bundle, PolicyKind kind,
                          const Observation& obs) {
  const Matrix a = normalize_adjacency(obs.edges, static_cast<int>(obs.node_features.rows()));
  return policy_forward(bundle.params(kind), obs.node_features, a, obs.t_norm, obs.max_rho)
      .value;
}

struct PhaseSpec {
  int id = 1;
  PolicyKind trained = PolicyKind::general;
  bool mixed = false;
  bool opponent = false;
  double load_scale = 1.0;
  int max_outages = 0;
  long long budget = 0;
};

struct EvalStats {
  double mean_reward = 0.0;
  double mean_steps = 0.0;
};

inline EvalStats evaluate_greedy(const GridCase& gc, const DualPolicyBundle& bundle,
                                 const EnvConfig& env_cfg, int episodes,
                                 std::uint64_t seed_base) {
  EvalStats stats;
  if (episodes <= 0) return stats;
  std::mt19937_64 unused_rng(0);
  for (int ep = 0; ep < episodes; ++ep) {
    EnvConfig ec = env_cfg;
    ec.seed = mix_seed(seed_base, static_cast<std::uint64_t>(ep));
    Environment env(gc, ec);
    if (!env.reset()) continue;
    while (env.alive()) {
      const ActResult r = act(bundle, env.observation(), env.legal_mask(), true, unused_rng);
      const StepInfo info = env.step(r.action);
      if (info.done) break;
    }
    stats.mean_reward += env.episode_reward();
    stats.mean_steps += env.t();
  }
  stats.mean_reward /= episodes;
  stats.mean_steps /= episodes;
  return stats;
}

}  // namespace detail

inline TrainResult train(const GridCase& gc, DualPolicyBundle& bundle, const PpoConfig& cfg,
                         const TrainSchedule& schedule, const EnvConfig& base_env,
                         std::uint64_t seed) {
  validate(cfg);
  TrainResult result;

  std::vector<detail::PhaseSpec> phases;
  if (schedule.phase1_steps > 0)
    phases.push_back({1, PolicyKind::general, false, false, base_env.chronics.load_scale, 0,
                      schedule.phase1_steps});
  if (schedule.phase2_steps > 0)
    phases.push_back({2, PolicyKind::critical, false, true, schedule.heavy_load_scale,
                      schedule.max_initial_outages, schedule.phase2_steps});
  if (schedule.phase3_steps > 0)
    phases.push_back({3, PolicyKind::general, true, true, schedule.heavy_load_scale,
                      schedule.max_initial_outages, schedule.phase3_steps});

  std::mt19937_64 act_rng(mix_seed(seed, 0x61637472));
  std::mt19937_64 update_rng(mix_seed(seed, 0x75706472));
  std::mt19937_64 outage_rng(mix_seed(seed, 0x6f757467));

  AdamState adam_general = AdamState::for_arch(bundle.general_arch);
  AdamState adam_critical = AdamState::for_arch(bundle.critical_arch);
  std::vector<Transition> buffer_general, buffer_critical;
  buffer_general.reserve(cfg.rollout_length);
  buffer_critical.reserve(cfg.rollout_length);

  long long global_steps = 0;
  long long last_checkpoint = 0;
  const long long initial_trained = bundle.trained_steps;

  auto maybe_checkpoint = [&] {
    if (schedule.checkpoint_path.empty() || schedule.checkpoint_every_steps <= 0) return;
    if (global_steps - last_checkpoint < schedule.checkpoint_every_steps) return;
    bundle.trained_steps = initial_trained + global_steps;
    save_bundle(bundle, schedule.checkpoint_path);
    last_checkpoint = global_steps;
    result.log.push_back(
        {{"event", "checkpoint"}, {"step", global_steps}, {"path", schedule.checkpoint_path}});
  };

  for (const detail::PhaseSpec& phase : phases) {
    EnvConfig phase_env = base_env;
    phase_env.opponent.enabled = phase.opponent;
    phase_env.chronics.load_scale = phase.load_scale;

    auto run_eval = [&] {
      const detail::EvalStats ev = detail::evaluate_greedy(
          gc, bundle, phase_env, schedule.eval_episodes,
          mix_seed(seed, 0x6576616c ^ static_cast<std::uint64_t>(phase.id)));
      result.log.push_back({{"event", "eval"},
                            {"step", global_steps},
                            {"phase", phase.id},
                            {"mean_reward", ev.mean_reward},
                            {"mean_steps", ev.mean_steps}});
    };

    auto flush = [&](PolicyKind kind, bool final_partial) {
      std::vector<Transition>& buffer =
          kind == PolicyKind::general ? buffer_general : buffer_critical;
      if (buffer.empty()) return;
      if (final_partial && static_cast<int>(buffer.size()) < cfg.minibatch_size) {
        buffer.clear();
        return;
      }
      const PpoPolicyHyper& hyper = kind == PolicyKind::general ? cfg.general : cfg.critical;
      compute_gae(buffer, hyper.discount, cfg.gae_lambda, cfg.normalize_advantages);
      PpoUpdateOptions opt;
      opt.learning_rate = hyper.learning_rate;
      opt.entropy_coef = hyper.entropy_coef;
      opt.clip_epsilon = cfg.clip_epsilon;
      opt.epochs = cfg.epochs_per_update;
      opt.minibatch_size = cfg.minibatch_size;
      AdamState& adam = kind == PolicyKind::general ? adam_general : adam_critical;
      const int transitions = static_cast<int>(buffer.size());
      const UpdateStats stats =
          ppo_update(buffer, bundle.arch(kind), bundle.params(kind), adam, opt, update_rng);
      buffer.clear();
      result.log.push_back({{"event", "update"},
                            {"step", global_steps},
                            {"phase", phase.id},
                            {"policy", to_string(kind)},
                            {"transitions", transitions},
                            {"surrogate", stats.surrogate},
                            {"value_loss", stats.value_loss},
                            {"entropy", stats.entropy},
                            {"clip_fraction", stats.clip_fraction}});
    };

    result.log.push_back({{"event", "phase"},
                          {"phase", phase.id},
                          {"step", global_steps},
                          {"policy", to_string(phase.trained)},
                          {"mixed", phase.mixed}});
    run_eval();

    long long steps_in_phase = 0;
    long long episode_index = 0;
    int updates_since_eval = 0;
    // chain tracking: (episode, t) of the last transition buffered per policy
    std::array<std::pair<long long, int>, 2> last_key = {
        std::make_pair<long long, int>(-1, -1), std::make_pair<long long, int>(-1, -1)};

    while (steps_in_phase < phase.budget) {
      EnvConfig ec = phase_env;
      ec.seed = mix_seed(seed, static_cast<std::uint64_t>(phase.id),
                         static_cast<std::uint64_t>(episode_index));
      Environment env(gc, ec);

      bool feasible = false;
      if (phase.max_outages > 0) {
        for (int attempt = 0; attempt < 10 && !feasible; ++attempt) {
          const int k = static_cast<int>(outage_rng() % (phase.max_outages + 1));
          std::vector<int> ids(gc.lines.size());
          std::iota(ids.begin(), ids.end(), 0);
          std::vector<int> outages;
          std::sample(ids.begin(), ids.end(), std::back_inserter(outages), k, outage_rng);
          feasible = env.reset(outages);
        }
      }
      if (!feasible) feasible = env.reset();
      ++episode_index;
      if (!feasible) continue;

      while (env.alive() && steps_in_phase < phase.budget) {
        const Observation obs = env.observation();
        const std::vector<std::uint8_t> mask = env.legal_mask();
        const int t_before = env.t();
        const ActResult chosen = act(bundle, obs, mask, false, act_rng);
        const StepInfo info = env.step(chosen.action);
        ++global_steps;
        ++steps_in_phase;

        const bool route_to_buffer = phase.mixed || chosen.used == phase.trained;
        if (route_to_buffer) {
          std::vector<Transition>& buffer =
              chosen.used == PolicyKind::general ? buffer_general : buffer_critical;
          auto& key = last_key[chosen.used == PolicyKind::general ? 0 : 1];
          if (!buffer.empty() && key.first == episode_index && key.second == t_before - 1)
            buffer.back().segment_end = false;
          key = {episode_index, t_before};

          Transition tr;
          tr.observation = obs;
          tr.mask = mask;
          tr.action = chosen.action;
          tr.log_prob = chosen.log_prob;
          tr.value_estimate = chosen.value;
          tr.reward = info.reward.total;
          tr.done = info.done;
          tr.next_value =
              info.done ? 0.0 : detail::state_value(bundle, chosen.used, env.observation());
          buffer.push_back(std::move(tr));

          if (static_cast<int>(buffer.size()) >= cfg.rollout_length) {
            flush(chosen.used, false);
            key = {-1, -1};
            if (++updates_since_eval >= schedule.eval_every_updates) {
              run_eval();
              updates_since_eval = 0;
            }
            maybe_checkpoint();
          }
        }
        if (info.done) break;
      }
    }

    flush(PolicyKind::general, true);
    flush(PolicyKind::critical, true);
    last_key = {std::make_pair<long long, int>(-1, -1), std::make_pair<long long, int>(-1, -1)};
    run_eval();
  }

  bundle.trained_steps = initial_trained + global_steps;
  if (!schedule.checkpoint_path.empty()) save_bundle(bundle, schedule.checkpoint_path);
  result.env_steps = global_steps;
  return result;
}

inline void write_jsonl(const std::vector<json>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open log file: " + path);
  for (const json& line : log) out << line.dump() << "\n";
}

}  // namespace gridrl
