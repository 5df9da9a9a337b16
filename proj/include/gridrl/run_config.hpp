#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <gridrl/environment.hpp>
#include <gridrl/ppo.hpp>
#include <gridrl/screening.hpp>

namespace gridrl {

NLOHMANN_JSON_SERIALIZE_ENUM(OpponentMode, {
                                               {OpponentMode::all_high, "all_high"},
                                               {OpponentMode::single_max, "single_max"},
                                           })

// from_json keeps the current value when a key is absent, so parsed trees
// layer over defaults and over each other

inline void to_json(json& j, const ChronicsConfig& c) {
  j = {{"load_scale", c.load_scale},
       {"daily_amplitude", c.daily_amplitude},
       {"noise_amplitude", c.noise_amplitude},
       {"period_steps", c.period_steps}};
}

inline void from_json(const json& j, ChronicsConfig& c) {
  c.load_scale = j.value("load_scale", c.load_scale);
  c.daily_amplitude = j.value("daily_amplitude", c.daily_amplitude);
  c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
  c.period_steps = j.value("period_steps", c.period_steps);
}

inline void to_json(json& j, const RewardConfig& c) {
  j = {{"action_none", c.action_none},
       {"action_minimal", c.action_minimal},
       {"action_illegal", c.action_illegal},
       {"survival_alpha", c.survival_alpha},
       {"overload_beta", c.overload_beta},
       {"rho_threshold", c.rho_threshold}};
}

inline void from_json(const json& j, RewardConfig& c) {
  c.action_none = j.value("action_none", c.action_none);
  c.action_minimal = j.value("action_minimal", c.action_minimal);
  c.action_illegal = j.value("action_illegal", c.action_illegal);
  c.survival_alpha = j.value("survival_alpha", c.survival_alpha);
  c.overload_beta = j.value("overload_beta", c.overload_beta);
  c.rho_threshold = j.value("rho_threshold", c.rho_threshold);
}

inline void to_json(json& j, const OpponentConfig& c) {
  j = {{"enabled", c.enabled},
       {"tau_attack", c.tau_attack},
       {"attackable", c.attackable},
       {"rho_threshold", c.rho_threshold},
       {"mode", c.mode},
       {"attack_duration", c.attack_duration},
       {"literal_fallback", c.literal_fallback}};
}

inline void from_json(const json& j, OpponentConfig& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.tau_attack = j.value("tau_attack", c.tau_attack);
  c.attackable = j.value("attackable", c.attackable);
  c.rho_threshold = j.value("rho_threshold", c.rho_threshold);
  c.mode = j.value("mode", c.mode);
  c.attack_duration = j.value("attack_duration", c.attack_duration);
  c.literal_fallback = j.value("literal_fallback", c.literal_fallback);
}

inline void to_json(json& j, const EnvConfig& c) {
  j = {{"episode_limit", c.episode_limit},
       {"rho_threshold", c.rho_threshold},
       {"overflow_persistence", c.overflow_persistence},
       {"hard_overflow_factor", c.hard_overflow_factor},
       {"line_cooldown", c.line_cooldown},
       {"min_served_fraction", c.min_served_fraction},
       {"seed", c.seed},
       {"chronics", c.chronics},
       {"reward", c.reward},
       {"opponent", c.opponent}};
}

inline void from_json(const json& j, EnvConfig& c) {
  c.episode_limit = j.value("episode_limit", c.episode_limit);
  c.rho_threshold = j.value("rho_threshold", c.rho_threshold);
  c.overflow_persistence = j.value("overflow_persistence", c.overflow_persistence);
  c.hard_overflow_factor = j.value("hard_overflow_factor", c.hard_overflow_factor);
  c.line_cooldown = j.value("line_cooldown", c.line_cooldown);
  c.min_served_fraction = j.value("min_served_fraction", c.min_served_fraction);
  c.seed = j.value("seed", c.seed);
  if (j.contains("chronics")) j.at("chronics").get_to(c.chronics);
  if (j.contains("reward")) j.at("reward").get_to(c.reward);
  if (j.contains("opponent")) j.at("opponent").get_to(c.opponent);
}

inline void to_json(json& j, const PpoPolicyHyper& c) {
  j = {{"learning_rate", c.learning_rate},
       {"entropy_coef", c.entropy_coef},
       {"discount", c.discount}};
}

inline void from_json(const json& j, PpoPolicyHyper& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.discount = j.value("discount", c.discount);
}

inline void to_json(json& j, const PpoConfig& c) {
  j = {{"clip_epsilon", c.clip_epsilon},
       {"gae_lambda", c.gae_lambda},
       {"epochs_per_update", c.epochs_per_update},
       {"minibatch_size", c.minibatch_size},
       {"rollout_length", c.rollout_length},
       {"normalize_advantages", c.normalize_advantages},
       {"general", c.general},
       {"critical", c.critical}};
}

inline void from_json(const json& j, PpoConfig& c) {
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.epochs_per_update = j.value("epochs_per_update", c.epochs_per_update);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.rollout_length = j.value("rollout_length", c.rollout_length);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  if (j.contains("general")) j.at("general").get_to(c.general);
  if (j.contains("critical")) j.at("critical").get_to(c.critical);
}

inline void to_json(json& j, const TrainSchedule& c) {
  j = {{"phase1_steps", c.phase1_steps},
       {"phase2_steps", c.phase2_steps},
       {"phase3_steps", c.phase3_steps},
       {"eval_episodes", c.eval_episodes},
       {"eval_every_updates", c.eval_every_updates},
       {"checkpoint_every_steps", c.checkpoint_every_steps},
       {"heavy_load_scale", c.heavy_load_scale},
       {"max_initial_outages", c.max_initial_outages}};
}

inline void from_json(const json& j, TrainSchedule& c) {
  c.phase1_steps = j.value("phase1_steps", c.phase1_steps);
  c.phase2_steps = j.value("phase2_steps", c.phase2_steps);
  c.phase3_steps = j.value("phase3_steps", c.phase3_steps);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.eval_every_updates = j.value("eval_every_updates", c.eval_every_updates);
  c.checkpoint_every_steps = j.value("checkpoint_every_steps", c.checkpoint_every_steps);
  c.heavy_load_scale = j.value("heavy_load_scale", c.heavy_load_scale);
  c.max_initial_outages = j.value("max_initial_outages", c.max_initial_outages);
}

inline void to_json(json& j, const ScreenSettings& c) {
  j = {{"ks", c.ks},          {"run_no_agent", c.run_no_agent}, {"run_agent", c.run_agent},
       {"jobs", c.jobs},      {"out_dir", c.out_dir},           {"resume", c.resume},
       {"progress", c.progress}};
}

inline void from_json(const json& j, ScreenSettings& c) {
  c.ks = j.value("ks", c.ks);
  c.run_no_agent = j.value("run_no_agent", c.run_no_agent);
  c.run_agent = j.value("run_agent", c.run_agent);
  c.jobs = j.value("jobs", c.jobs);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.resume = j.value("resume", c.resume);
  c.progress = j.value("progress", c.progress);
}

struct RunConfig {
  std::string case_path;  // empty: bundled modified IEEE 14-bus case
  std::uint64_t seed = 1;
  bool ppo_raw_table = false;
  std::string checkpoint = "checkpoint.json";
  std::string train_log = "train_log.jsonl";
  EnvConfig env;
  PpoConfig ppo;
  TrainSchedule schedule;
  ScreenSettings screening;
};

inline void to_json(json& j, const RunConfig& c) {
  j = {{"case_path", c.case_path},
       {"seed", c.seed},
       {"ppo_raw_table", c.ppo_raw_table},
       {"checkpoint", c.checkpoint},
       {"train_log", c.train_log},
       {"env", c.env},
       {"ppo", c.ppo},
       {"schedule", c.schedule},
       {"screening", c.screening}};
}

inline void from_json(const json& j, RunConfig& c) {
  c.case_path = j.value("case_path", c.case_path);
  c.seed = j.value("seed", c.seed);
  c.ppo_raw_table = j.value("ppo_raw_table", c.ppo_raw_table);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.train_log = j.value("train_log", c.train_log);
  if (j.contains("env")) j.at("env").get_to(c.env);
  if (j.contains("ppo")) j.at("ppo").get_to(c.ppo);
  if (j.contains("schedule")) j.at("schedule").get_to(c.schedule);
  if (j.contains("screening")) j.at("screening").get_to(c.screening);
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json config_schema() { return json(RunConfig{}); }

// rejects keys that do not exist in the schema, catching config typos
inline void validate_config_tree(const json& tree, const json& schema,
                                 const std::string& prefix = "") {
  if (!tree.is_object()) return;
  for (const auto& [key, value] : tree.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.is_object() || !schema.contains(key))
      throw ConfigError("unknown config key: " + path);
    if (value.is_object()) validate_config_tree(value, schema.at(key), path);
  }
}

// "env.opponent.tau_attack=5" -> {"env":{"opponent":{"tau_attack":5}}}
inline json override_patch(const std::string& spec, const json& schema) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like path.to.key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string value_text = spec.substr(eq + 1);

  std::vector<std::string> segments;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    segments.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  const json* node = &schema;
  for (const std::string& seg : segments) {
    if (seg.empty() || !node->is_object() || !node->contains(seg))
      throw ConfigError("unknown config key: " + path);
    node = &node->at(seg);
  }
  if (node->is_object()) throw ConfigError("cannot assign to a config section: " + path);

  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;  // bare words become strings
  }

  json patch = value;
  for (auto it = segments.rbegin(); it != segments.rend(); ++it) patch = json{{*it, patch}};
  return patch;
}

// layering: defaults <- config file <- --set overrides, applied as one tree
inline RunConfig resolve_config(const json& tree) {
  validate_config_tree(tree, config_schema());
  RunConfig cfg;
  if (tree.value("ppo_raw_table", false)) cfg.ppo = raw_table_config();
  tree.get_to(cfg);
  return cfg;
}

}  // namespace gridrl
