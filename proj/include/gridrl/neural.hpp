#pragma once

// Graph-convolutional feature extractor with an MLP policy/value head, plus
// reverse-mode gradients derived by hand for this fixed computation graph
// and an Adam optimizer. No external autodiff: the architecture is small
// and static, so every adjoint is written out explicitly and checked against
// finite differences in the tests.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "environment.hpp"

namespace gridrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct PolicyArchitecture {
  int node_features = kNodeFeatureDim;
  int gcn_hidden = 64;
  int embedding = 128;
  int scalar_context = 2;  // normalized time and worst loading
  int mlp_hidden1 = 256;
  int mlp_hidden2 = 128;
  int actions = 55;

  int mlp_input() const { return embedding + scalar_context; }
  bool operator==(const PolicyArchitecture&) const = default;
};

struct PolicyParams {
  Matrix gcn_w0;    // node_features x gcn_hidden
  Matrix gcn_w1;    // gcn_hidden x embedding
  Matrix w1;        // mlp_hidden1 x mlp_input
  Matrix w2;        // mlp_hidden2 x mlp_hidden1
  Matrix w_policy;  // actions x mlp_hidden2
  Vector b1, b2, b_policy;
  Vector w_value;  // mlp_hidden2
  double b_value = 0.0;

  static constexpr int tensor_count = 9;

  template <class F>
  void for_each(F f) {
    f("gcn_w0", gcn_w0);
    f("gcn_w1", gcn_w1);
    f("w1", w1);
    f("w2", w2);
    f("w_policy", w_policy);
    f("b1", b1);
    f("b2", b2);
    f("b_policy", b_policy);
    f("w_value", w_value);
  }
  template <class F>
  void for_each(F f) const {
    const_cast<PolicyParams*>(this)->for_each(
        [&](const char* name, auto& t) { f(name, const_cast<const decltype(t)&>(t)); });
  }
};

inline PolicyParams zeros_like_params(const PolicyArchitecture& a) {
  PolicyParams p;
  p.gcn_w0 = Matrix::Zero(a.node_features, a.gcn_hidden);
  p.gcn_w1 = Matrix::Zero(a.gcn_hidden, a.embedding);
  p.w1 = Matrix::Zero(a.mlp_hidden1, a.mlp_input());
  p.b1 = Vector::Zero(a.mlp_hidden1);
  p.w2 = Matrix::Zero(a.mlp_hidden2, a.mlp_hidden1);
  p.b2 = Vector::Zero(a.mlp_hidden2);
  p.w_policy = Matrix::Zero(a.actions, a.mlp_hidden2);
  p.b_policy = Vector::Zero(a.actions);
  p.w_value = Vector::Zero(a.mlp_hidden2);
  p.b_value = 0.0;
  return p;
}

inline PolicyParams init_params(const PolicyArchitecture& a, std::mt19937_64& rng) {
  PolicyParams p = zeros_like_params(a);
  auto xavier = [&](Matrix& w) {
    const double s = std::sqrt(6.0 / (w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-s, s);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  };
  xavier(p.gcn_w0);
  xavier(p.gcn_w1);
  xavier(p.w1);
  xavier(p.w2);
  xavier(p.w_policy);
  {
    const double s = std::sqrt(6.0 / (1.0 + p.w_value.size()));
    std::uniform_real_distribution<double> u(-s, s);
    for (Eigen::Index i = 0; i < p.w_value.size(); ++i) p.w_value(i) = u(rng);
  }
  return p;
}

inline void add_scaled(PolicyParams& dst, const PolicyParams& src, double s) {
  dst.gcn_w0 += s * src.gcn_w0;
  dst.gcn_w1 += s * src.gcn_w1;
  dst.w1 += s * src.w1;
  dst.b1 += s * src.b1;
  dst.w2 += s * src.w2;
  dst.b2 += s * src.b2;
  dst.w_policy += s * src.w_policy;
  dst.b_policy += s * src.b_policy;
  dst.w_value += s * src.w_value;
  dst.b_value += s * src.b_value;
}

inline bool all_finite(const PolicyParams& p) {
  bool ok = std::isfinite(p.b_value);
  p.for_each([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// symmetric normalization with self loops; parallel edges collapse to one
inline Matrix normalize_adjacency(const std::vector<std::array<int, 2>>& edges, int n) {
  Matrix a = Matrix::Identity(n, n);
  for (const auto& [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  Vector d_inv_sqrt(n);
  for (int i = 0; i < n; ++i) d_inv_sqrt(i) = 1.0 / std::sqrt(a.row(i).sum());
  return d_inv_sqrt.asDiagonal() * a * d_inv_sqrt.asDiagonal();
}

struct PolicyOutput {
  Vector logits;
  double value = 0.0;
};

struct ForwardTape {
  Matrix a_norm, h0, ah0, z1, az1, z2;
  Vector x, h1, h2;
};

inline PolicyOutput policy_forward(const PolicyParams& p, const Matrix& node_features,
                                   const Matrix& a_norm, double t_norm, double max_rho,
                                   ForwardTape* tape = nullptr) {
  const Matrix ah0 = a_norm * node_features;
  const Matrix z1 = (ah0 * p.gcn_w0).cwiseMax(0.0);
  const Matrix az1 = a_norm * z1;
  const Matrix z2 = (az1 * p.gcn_w1).cwiseMax(0.0);

  Vector x(p.w1.cols());
  x.head(z2.cols()) = z2.colwise().mean().transpose();
  x(z2.cols()) = t_norm;
  x(z2.cols() + 1) = max_rho;

  const Vector h1 = (p.w1 * x + p.b1).cwiseMax(0.0);
  const Vector h2 = (p.w2 * h1 + p.b2).cwiseMax(0.0);

  PolicyOutput out;
  out.logits = p.w_policy * h2 + p.b_policy;
  out.value = p.w_value.dot(h2) + p.b_value;

  if (tape) {
    tape->a_norm = a_norm;
    tape->h0 = node_features;
    tape->ah0 = ah0;
    tape->z1 = z1;
    tape->az1 = az1;
    tape->z2 = z2;
    tape->x = x;
    tape->h1 = h1;
    tape->h2 = h2;
  }
  return out;
}

// accumulates d(loss)/d(params) into grads for upstream gradients d_logits,
// d_value recorded on the given tape
inline void policy_backward(const PolicyParams& p, const ForwardTape& tape,
                            const Vector& d_logits, double d_value, PolicyParams& grads) {
  grads.w_policy += d_logits * tape.h2.transpose();
  grads.b_policy += d_logits;
  grads.w_value += d_value * tape.h2;
  grads.b_value += d_value;

  Vector d_h2 = p.w_policy.transpose() * d_logits + d_value * p.w_value;
  d_h2 = (tape.h2.array() > 0.0).select(d_h2, 0.0);
  grads.w2 += d_h2 * tape.h1.transpose();
  grads.b2 += d_h2;

  Vector d_h1 = p.w2.transpose() * d_h2;
  d_h1 = (tape.h1.array() > 0.0).select(d_h1, 0.0);
  grads.w1 += d_h1 * tape.x.transpose();
  grads.b1 += d_h1;

  const Vector d_x = p.w1.transpose() * d_h1;
  const int emb = static_cast<int>(tape.z2.cols());
  const int n = static_cast<int>(tape.z2.rows());

  // mean pooling spreads the embedding gradient evenly over nodes
  Matrix d_z2 = Vector::Constant(n, 1.0 / n) * d_x.head(emb).transpose();
  d_z2 = (tape.z2.array() > 0.0).select(d_z2, 0.0);
  grads.gcn_w1 += tape.az1.transpose() * d_z2;

  Matrix d_z1 = tape.a_norm.transpose() * (d_z2 * p.gcn_w1.transpose());
  d_z1 = (tape.z1.array() > 0.0).select(d_z1, 0.0);
  grads.gcn_w0 += tape.ah0.transpose() * d_z1;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  PolicyParams m, v;
  long step = 0;

  static AdamState for_arch(const PolicyArchitecture& a) {
    return {zeros_like_params(a), zeros_like_params(a), 0};
  }
};

inline void adam_step(PolicyParams& params, const PolicyParams& grads, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p -= lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + cfg.epsilon).matrix());
  };
  update(params.gcn_w0, grads.gcn_w0, state.m.gcn_w0, state.v.gcn_w0);
  update(params.gcn_w1, grads.gcn_w1, state.m.gcn_w1, state.v.gcn_w1);
  update(params.w1, grads.w1, state.m.w1, state.v.w1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.w2, grads.w2, state.m.w2, state.v.w2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
  update(params.w_policy, grads.w_policy, state.m.w_policy, state.v.w_policy);
  update(params.b_policy, grads.b_policy, state.m.b_policy, state.v.b_policy);
  update(params.w_value, grads.w_value, state.m.w_value, state.v.w_value);
  {
    double& m = state.m.b_value;
    double& v = state.v.b_value;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads.b_value;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads.b_value * grads.b_value;
    params.b_value -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
  }
}

}  // namespace gridrl
