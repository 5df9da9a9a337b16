#pragma once

// Dual-policy head: a general network for calm grids and a critical network
// engaged when any line runs hot. Includes masked categorical sampling and
// JSON checkpoints that round-trip bit-exactly.

#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "neural.hpp"

namespace gridrl {

enum class PolicyKind { general, critical };

inline const char* to_string(PolicyKind k) {
  return k == PolicyKind::general ? "general" : "critical";
}

// the critical policy takes over only on a strict exceedance
inline PolicyKind select_policy(double max_rho, double rho_threshold) {
  return max_rho > rho_threshold ? PolicyKind::critical : PolicyKind::general;
}

struct MaskedDistribution {
  Vector probs;      // zero on illegal actions
  Vector log_probs;  // -inf on illegal actions
  double entropy = 0.0;
};

inline MaskedDistribution masked_distribution(const Vector& logits,
                                              const std::vector<std::uint8_t>& mask) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  MaskedDistribution d;
  d.probs = Vector::Zero(logits.size());
  d.log_probs = Vector::Constant(logits.size(), neg_inf);

  double max_legal = neg_inf;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask[i] && logits(i) > max_legal) max_legal = logits(i);
  if (max_legal == neg_inf) {  // no legal action: degenerate on the no-op
    d.probs(0) = 1.0;
    d.log_probs(0) = 0.0;
    return d;
  }

  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask[i]) z += std::exp(logits(i) - max_legal);
  const double log_z = std::log(z);

  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    d.log_probs(i) = logits(i) - max_legal - log_z;
    d.probs(i) = std::exp(d.log_probs(i));
    if (d.probs(i) > 0.0) d.entropy -= d.probs(i) * d.log_probs(i);
  }
  return d;
}

inline int sample_index(const MaskedDistribution& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  int last_legal = 0;
  for (Eigen::Index i = 0; i < d.probs.size(); ++i) {
    if (d.probs(i) <= 0.0) continue;
    last_legal = static_cast<int>(i);
    r -= d.probs(i);
    if (r <= 0.0) return last_legal;
  }
  return last_legal;  // guard against accumulated rounding
}

inline int greedy_index(const MaskedDistribution& d) {
  int best = 0;
  double best_p = -1.0;
  for (Eigen::Index i = 0; i < d.probs.size(); ++i)
    if (d.probs(i) > best_p) {  // strict: ties keep the lowest index
      best_p = d.probs(i);
      best = static_cast<int>(i);
    }
  return best;
}

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DualPolicyBundle {
  PolicyArchitecture general_arch;
  PolicyArchitecture critical_arch;
  PolicyParams general;
  PolicyParams critical;
  double rho_threshold = 0.95;
  long trained_steps = 0;
  std::uint64_t seed = 0;

  const PolicyParams& params(PolicyKind k) const {
    return k == PolicyKind::general ? general : critical;
  }
  PolicyParams& params(PolicyKind k) { return k == PolicyKind::general ? general : critical; }
  const PolicyArchitecture& arch(PolicyKind k) const {
    return k == PolicyKind::general ? general_arch : critical_arch;
  }
};

inline DualPolicyBundle make_bundle(int actions, std::uint64_t seed) {
  DualPolicyBundle b;
  b.general_arch.actions = actions;
  b.general_arch.mlp_hidden1 = 256;
  b.general_arch.mlp_hidden2 = 128;
  b.critical_arch = b.general_arch;
  b.critical_arch.mlp_hidden1 = 512;
  b.critical_arch.mlp_hidden2 = 256;
  b.seed = seed;
  std::mt19937_64 rng(splitmix64(seed));
  b.general = init_params(b.general_arch, rng);
  b.critical = init_params(b.critical_arch, rng);
  return b;
}

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  PolicyKind used = PolicyKind::general;
};

inline ActResult act(const DualPolicyBundle& bundle, const Observation& obs,
                     const std::vector<std::uint8_t>& mask, bool greedy, std::mt19937_64& rng) {
  ActResult r;
  r.used = select_policy(obs.max_rho, bundle.rho_threshold);
  const Matrix a_norm =
      normalize_adjacency(obs.edges, static_cast<int>(obs.node_features.rows()));
  const PolicyOutput out = policy_forward(bundle.params(r.used), obs.node_features, a_norm,
                                          obs.t_norm, obs.max_rho);
  const MaskedDistribution dist = masked_distribution(out.logits, mask);
  r.action = greedy ? greedy_index(dist) : sample_index(dist, rng);
  r.log_prob = dist.log_probs(r.action);
  r.value = out.value;
  return r;
}

namespace detail {

inline json arch_to_json(const PolicyArchitecture& a) {
  return {{"node_features", a.node_features}, {"gcn_hidden", a.gcn_hidden},
          {"embedding", a.embedding},         {"scalar_context", a.scalar_context},
          {"mlp_hidden1", a.mlp_hidden1},     {"mlp_hidden2", a.mlp_hidden2},
          {"actions", a.actions}};
}

inline PolicyArchitecture arch_from_json(const json& j) {
  PolicyArchitecture a;
  a.node_features = j.at("node_features").get<int>();
  a.gcn_hidden = j.at("gcn_hidden").get<int>();
  a.embedding = j.at("embedding").get<int>();
  a.scalar_context = j.at("scalar_context").get<int>();
  a.mlp_hidden1 = j.at("mlp_hidden1").get<int>();
  a.mlp_hidden2 = j.at("mlp_hidden2").get<int>();
  a.actions = j.at("actions").get<int>();
  return a;
}

inline json tensor_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline json tensor_to_json(const Vector& v) {
  json data = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  return {{"rows", v.size()}, {"cols", 1}, {"data", std::move(data)}};
}

inline void tensor_from_json(const json& j, Matrix& m, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows != m.rows() || cols != m.cols())
    throw CheckpointError("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", expected " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw CheckpointError("tensor " + name + " data length mismatch");
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++].get<double>();
}

inline void tensor_from_json(const json& j, Vector& v, const std::string& name) {
  Matrix m(v.size(), 1);
  tensor_from_json(j, m, name);
  v = m.col(0);
}

inline json params_to_json(const PolicyParams& p) {
  json j;
  p.for_each([&](const char* name, const auto& t) { j[name] = tensor_to_json(t); });
  j["b_value"] = p.b_value;
  return j;
}

inline void params_from_json(const json& j, PolicyParams& p, const std::string& prefix) {
  try {
    p.for_each([&](const char* name, auto& t) {
      tensor_from_json(j.at(name), t, prefix + "." + name);
    });
    p.b_value = j.at("b_value").get<double>();
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint tensors under " + prefix + ": " + e.what());
  }
}

}  // namespace detail

inline void save_bundle(const DualPolicyBundle& b, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "dual_policy";
  j["rho_threshold"] = b.rho_threshold;
  j["trained_steps"] = b.trained_steps;
  j["seed"] = b.seed;
  j["general"] = {{"architecture", detail::arch_to_json(b.general_arch)},
                  {"tensors", detail::params_to_json(b.general)}};
  j["critical"] = {{"architecture", detail::arch_to_json(b.critical_arch)},
                   {"tensors", detail::params_to_json(b.critical)}};
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

inline DualPolicyBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
    throw CheckpointError("unsupported or missing checkpoint schema_version (expected 1)");

  DualPolicyBundle b;
  try {
    b.rho_threshold = j.at("rho_threshold").get<double>();
    b.trained_steps = j.at("trained_steps").get<long>();
    b.seed = j.at("seed").get<std::uint64_t>();
    b.general_arch = detail::arch_from_json(j.at("general").at("architecture"));
    b.critical_arch = detail::arch_from_json(j.at("critical").at("architecture"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  b.general = zeros_like_params(b.general_arch);
  b.critical = zeros_like_params(b.critical_arch);
  detail::params_from_json(j.at("general").at("tensors"), b.general, "general");
  detail::params_from_json(j.at("critical").at("tensors"), b.critical, "critical");
  return b;
}

}  // namespace gridrl
