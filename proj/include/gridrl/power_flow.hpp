#pragma once

// Polar Newton-Raphson AC power flow over the live graph. Supports fixed
// off-nominal tap ratios, generator reactive limits (PV to PQ switching,
// at most one switch per node per solve), warm starts keyed by busbar, and
// two islanding policies: permissive (islands without the slack are shed
// and reported) or strict (any shed equipment fails the solve).

#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "grid_case.hpp"
#include "topology.hpp"

namespace gridrl {

using Complex = std::complex<double>;

enum class SolveStatus { converged, diverged, islanded_slack };

struct SolverOptions {
  double tolerance = 1e-8;  // max power mismatch, pu
  int max_iterations = 20;  // counted as mismatch evaluations
  bool strict_islanding = false;
};

// Active setpoints, decoupled from the case so time series can rescale them.
struct Injections {
  std::vector<double> gen_p_mw;
  std::vector<double> load_p_mw;
  std::vector<double> load_q_mvar;
};

inline Injections nominal_injections(const GridCase& gc) {
  Injections inj;
  for (const auto& g : gc.generators) inj.gen_p_mw.push_back(g.p_set_mw);
  for (const auto& l : gc.loads) {
    inj.load_p_mw.push_back(l.p_mw);
    inj.load_q_mvar.push_back(l.q_mvar);
  }
  return inj;
}

// Voltage guess indexed by sub * 2 + (busbar - 1); NaN entries fall back to flat.
struct WarmStart {
  std::vector<double> v_mag;
  std::vector<double> v_ang;
};

struct PowerFlowSolution {
  SolveStatus status = SolveStatus::diverged;
  bool converged = false;
  int iterations = 0;

  LiveGraph graph;
  std::vector<double> v_mag;  // per live node, 0 for shed nodes
  std::vector<double> v_ang;
  std::vector<std::uint8_t> node_served;  // 1 = in the slack island

  std::vector<Complex> s_from_mva;  // per line, 0 when out of service or shed
  std::vector<Complex> s_to_mva;
  std::vector<double> rho;  // loading ratio per line

  std::vector<double> gen_q_mvar;      // reactive output per generator
  std::vector<std::uint8_t> gen_q_limited;  // hit a reactive limit this solve
  double slack_p_mw = 0.0;

  double served_load_mw = 0.0;
  double shed_load_mw = 0.0;
  bool shed_any_load = false;
  bool shed_any_gen = false;
  int pv_to_pq_switches = 0;
};

inline Eigen::MatrixXcd build_ybus(const GridCase& gc, const LiveGraph& lg) {
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(lg.node_count, lg.node_count);
  for (std::size_t e = 0; e < lg.edges.size(); ++e) {
    const Line& ln = gc.lines[lg.edge_line[e]];
    const auto [f, t] = lg.edges[e];
    const Complex ys = 1.0 / Complex(ln.r_pu, ln.x_pu);
    const Complex ysh(0.0, ln.b_charging_pu / 2.0);
    const double a = ln.tap_ratio;
    y(f, f) += (ys + ysh) / (a * a);
    y(t, t) += ys + ysh;
    y(f, t) -= ys / a;
    y(t, f) -= ys / a;
  }
  return y;
}

inline Eigen::MatrixXcd build_ybus(const GridCase& gc, const Topology& topo) {
  return build_ybus(gc, live_graph(gc, topo));
}

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

inline PowerFlowSolution solve_power_flow(const GridCase& gc, const Topology& topo,
                                          const Injections& inj,
                                          const SolverOptions& opt = {},
                                          const WarmStart* warm = nullptr) {
  PowerFlowSolution sol;
  sol.graph = live_graph(gc, topo);
  const LiveGraph& lg = sol.graph;
  const int n = lg.node_count;
  const double base = gc.base_mva;

  sol.v_mag.assign(n, 0.0);
  sol.v_ang.assign(n, 0.0);
  sol.node_served.assign(n, 0);
  sol.s_from_mva.assign(gc.lines.size(), Complex(0.0, 0.0));
  sol.s_to_mva.assign(gc.lines.size(), Complex(0.0, 0.0));
  sol.rho.assign(gc.lines.size(), 0.0);
  sol.gen_q_mvar.assign(gc.generators.size(), 0.0);
  sol.gen_q_limited.assign(gc.generators.size(), 0);

  double total_load = 0.0;
  for (double p : inj.load_p_mw) total_load += p;

  // locate the slack node: the node hosting a generator on the slack bus,
  // falling back to any live busbar of the slack bus
  const int slack_sub = gc.slack_index();
  int slack_node = -1;
  for (std::size_t g = 0; g < gc.generators.size(); ++g)
    if (gc.bus_index(gc.generators[g].bus) == slack_sub && lg.node_of_gen[g] >= 0) {
      slack_node = lg.node_of_gen[g];
      break;
    }
  if (slack_node < 0) slack_node = std::max(lg.node_at(slack_sub, 1), lg.node_at(slack_sub, 2));
  if (slack_node < 0) {
    sol.status = SolveStatus::islanded_slack;
    sol.shed_load_mw = total_load;
    sol.shed_any_load = !gc.loads.empty();
    sol.shed_any_gen = true;
    return sol;
  }

  detail::UnionFind uf(n);
  for (const auto& [a, b] : lg.edges) uf.unite(a, b);
  const int slack_comp = uf.find(slack_node);
  for (int i = 0; i < n; ++i) sol.node_served[i] = uf.find(i) == slack_comp;

  // per-node aggregates on the slack island
  std::vector<double> p_sch(n, 0.0), q_sch(n, 0.0), q_load(n, 0.0);
  std::vector<double> v_set(n, 1.0);
  std::vector<double> q_min(n, 0.0), q_max(n, 0.0);
  std::vector<int> kind(n, 0);  // 0 = PQ, 1 = PV, 2 = slack

  for (std::size_t g = 0; g < gc.generators.size(); ++g) {
    const int node = lg.node_of_gen[g];
    if (node < 0 || !sol.node_served[node]) {
      sol.shed_any_gen = true;
      continue;
    }
    p_sch[node] += inj.gen_p_mw[g] / base;
    if (kind[node] == 0) {
      kind[node] = 1;
      v_set[node] = gc.generators[g].v_set_pu;
    }
    q_min[node] += gc.generators[g].q_min_mvar / base;
    q_max[node] += gc.generators[g].q_max_mvar / base;
  }
  for (std::size_t l = 0; l < gc.loads.size(); ++l) {
    const int node = lg.node_of_load[l];
    if (node < 0 || !sol.node_served[node]) {
      sol.shed_any_load = true;
      sol.shed_load_mw += inj.load_p_mw[l];
      continue;
    }
    p_sch[node] -= inj.load_p_mw[l] / base;
    q_sch[node] -= inj.load_q_mvar[l] / base;
    q_load[node] += inj.load_q_mvar[l] / base;
    sol.served_load_mw += inj.load_p_mw[l];
  }
  kind[slack_node] = 2;
  for (std::size_t g = 0; g < gc.generators.size(); ++g)
    if (lg.node_of_gen[g] == slack_node) {
      v_set[slack_node] = gc.generators[g].v_set_pu;
      break;
    }

  if (opt.strict_islanding && (sol.shed_any_load || sol.shed_any_gen)) {
    sol.status = SolveStatus::islanded_slack;
    return sol;
  }

  // compress the slack island into solver indexing
  std::vector<int> solver_of_node(n, -1), node_of_solver;
  for (int i = 0; i < n; ++i)
    if (sol.node_served[i]) {
      solver_of_node[i] = static_cast<int>(node_of_solver.size());
      node_of_solver.push_back(i);
    }
  const int m = static_cast<int>(node_of_solver.size());

  const Eigen::MatrixXcd ybus_full = build_ybus(gc, lg);
  Eigen::MatrixXcd ybus(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) ybus(i, j) = ybus_full(node_of_solver[i], node_of_solver[j]);
  const Eigen::MatrixXd g_mat = ybus.real(), b_mat = ybus.imag();

  Eigen::VectorXd vm(m), va(m);
  for (int i = 0; i < m; ++i) {
    const int node = node_of_solver[i];
    double v0 = kind[node] != 0 ? v_set[node] : 1.0;
    double a0 = 0.0;
    if (warm) {
      const int key = lg.node_sub[node] * 2 + (lg.node_busbar[node] - 1);
      if (key < static_cast<int>(warm->v_mag.size()) && std::isfinite(warm->v_mag[key]) &&
          warm->v_mag[key] > 0.0) {
        v0 = warm->v_mag[key];
        a0 = warm->v_ang[key];
      }
    }
    vm(i) = v0;
    va(i) = a0;
  }

  std::vector<int> solver_kind(m);
  for (int i = 0; i < m; ++i) solver_kind[i] = kind[node_of_solver[i]];

  auto calc_pq = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
    p.setZero(m);
    q.setZero(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double th = va(i) - va(j);
        const double c = std::cos(th), s = std::sin(th);
        p(i) += vm(i) * vm(j) * (g_mat(i, j) * c + b_mat(i, j) * s);
        q(i) += vm(i) * vm(j) * (g_mat(i, j) * s - b_mat(i, j) * c);
      }
  };

  std::vector<std::uint8_t> switched(m, 0);
  Eigen::VectorXd p_calc(m), q_calc(m);
  bool converged = false;

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    sol.iterations = iter;
    calc_pq(p_calc, q_calc);

    std::vector<int> p_rows, q_rows;
    for (int i = 0; i < m; ++i) {
      if (solver_kind[i] != 2) p_rows.push_back(i);
      if (solver_kind[i] == 0) q_rows.push_back(i);
    }
    const int np = static_cast<int>(p_rows.size()), nq = static_cast<int>(q_rows.size());

    Eigen::VectorXd mismatch(np + nq);
    for (int r = 0; r < np; ++r) {
      const int i = p_rows[r];
      mismatch(r) = p_sch[node_of_solver[i]] - p_calc(i);
    }
    for (int r = 0; r < nq; ++r) {
      const int i = q_rows[r];
      mismatch(np + r) = q_sch[node_of_solver[i]] - q_calc(i);
    }

    if (np + nq == 0 || mismatch.lpNorm<Eigen::Infinity>() < opt.tolerance) {
      // candidate convergence: enforce reactive limits before accepting
      bool any_switch = false;
      for (int i = 0; i < m; ++i) {
        if (solver_kind[i] != 1 || switched[i]) continue;
        const int node = node_of_solver[i];
        const double q_gen = q_calc(i) + q_load[node];
        if (q_gen > q_max[node] + 1e-9) {
          solver_kind[i] = 0;
          switched[i] = 1;
          q_sch[node] = q_max[node] - q_load[node];
          any_switch = true;
          ++sol.pv_to_pq_switches;
        } else if (q_gen < q_min[node] - 1e-9) {
          solver_kind[i] = 0;
          switched[i] = 1;
          q_sch[node] = q_min[node] - q_load[node];
          any_switch = true;
          ++sol.pv_to_pq_switches;
        }
      }
      if (!any_switch) {
        converged = true;
        break;
      }
      continue;  // re-iterate with the new bus types
    }

    if (iter == opt.max_iterations) break;

    // polar Jacobian
    Eigen::MatrixXd jac(np + nq, np + nq);
    for (int r = 0; r < np; ++r) {
      const int i = p_rows[r];
      for (int c = 0; c < np; ++c) {
        const int j = p_rows[c];
        if (i == j)
          jac(r, c) = -q_calc(i) - b_mat(i, i) * vm(i) * vm(i);
        else {
          const double th = va(i) - va(j);
          jac(r, c) = vm(i) * vm(j) * (g_mat(i, j) * std::sin(th) - b_mat(i, j) * std::cos(th));
        }
      }
      for (int c = 0; c < nq; ++c) {
        const int j = q_rows[c];
        if (i == j)
          jac(r, np + c) = p_calc(i) / vm(i) + g_mat(i, i) * vm(i);
        else {
          const double th = va(i) - va(j);
          jac(r, np + c) = vm(i) * (g_mat(i, j) * std::cos(th) + b_mat(i, j) * std::sin(th));
        }
      }
    }
    for (int r = 0; r < nq; ++r) {
      const int i = q_rows[r];
      for (int c = 0; c < np; ++c) {
        const int j = p_rows[c];
        if (i == j)
          jac(np + r, c) = p_calc(i) - g_mat(i, i) * vm(i) * vm(i);
        else {
          const double th = va(i) - va(j);
          jac(np + r, c) = -vm(i) * vm(j) * (g_mat(i, j) * std::cos(th) + b_mat(i, j) * std::sin(th));
        }
      }
      for (int c = 0; c < nq; ++c) {
        const int j = q_rows[c];
        if (i == j)
          jac(np + r, np + c) = q_calc(i) / vm(i) - b_mat(i, i) * vm(i);
        else {
          const double th = va(i) - va(j);
          jac(np + r, np + c) = vm(i) * (g_mat(i, j) * std::sin(th) - b_mat(i, j) * std::cos(th));
        }
      }
    }

    const Eigen::VectorXd dx = jac.partialPivLu().solve(mismatch);
    if (!dx.allFinite()) {
      sol.status = SolveStatus::diverged;
      return sol;
    }
    for (int r = 0; r < np; ++r) va(p_rows[r]) += dx(r);
    for (int r = 0; r < nq; ++r) vm(q_rows[r]) += dx(np + r);
    for (int r = 0; r < nq; ++r)
      if (vm(q_rows[r]) <= 0.0 || !std::isfinite(vm(q_rows[r]))) {
        sol.status = SolveStatus::diverged;
        return sol;
      }
  }

  if (!converged) {
    sol.status = SolveStatus::diverged;
    return sol;
  }

  sol.status = SolveStatus::converged;
  sol.converged = true;
  for (int i = 0; i < m; ++i) {
    sol.v_mag[node_of_solver[i]] = vm(i);
    sol.v_ang[node_of_solver[i]] = va(i);
  }

  // line flows on the slack island
  for (std::size_t e = 0; e < lg.edges.size(); ++e) {
    const auto [f, t] = lg.edges[e];
    if (!sol.node_served[f]) continue;
    const Line& ln = gc.lines[lg.edge_line[e]];
    const Complex ys = 1.0 / Complex(ln.r_pu, ln.x_pu);
    const Complex ysh(0.0, ln.b_charging_pu / 2.0);
    const double a = ln.tap_ratio;
    const Complex vf = std::polar(sol.v_mag[f], sol.v_ang[f]);
    const Complex vt = std::polar(sol.v_mag[t], sol.v_ang[t]);
    const Complex i_f = (ys + ysh) / (a * a) * vf - ys / a * vt;
    const Complex i_t = (ys + ysh) * vt - ys / a * vf;
    sol.s_from_mva[ln.id] = vf * std::conj(i_f) * base;
    sol.s_to_mva[ln.id] = vt * std::conj(i_t) * base;
    sol.rho[ln.id] =
        std::max(std::abs(sol.s_from_mva[ln.id]), std::abs(sol.s_to_mva[ln.id])) /
        ln.thermal_limit_mva;
  }

  // reactive allocation per generator and the slack active output
  calc_pq(p_calc, q_calc);
  std::vector<int> gens_on_node(n, 0);
  for (std::size_t g = 0; g < gc.generators.size(); ++g)
    if (lg.node_of_gen[g] >= 0 && sol.node_served[lg.node_of_gen[g]]) ++gens_on_node[lg.node_of_gen[g]];
  for (std::size_t g = 0; g < gc.generators.size(); ++g) {
    const int node = lg.node_of_gen[g];
    if (node < 0 || !sol.node_served[node]) continue;
    const int i = solver_of_node[node];
    sol.gen_q_mvar[g] = (q_calc(i) + q_load[node]) * base / gens_on_node[node];
    if (switched[i]) sol.gen_q_limited[g] = 1;
  }
  {
    double slack_load_p = 0.0;
    for (std::size_t l = 0; l < gc.loads.size(); ++l)
      if (lg.node_of_load[l] == slack_node) slack_load_p += inj.load_p_mw[l];
    sol.slack_p_mw = p_calc(solver_of_node[slack_node]) * base + slack_load_p;
  }

  return sol;
}

inline WarmStart warm_from_solution(const GridCase& gc, const PowerFlowSolution& sol) {
  WarmStart w;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  w.v_mag.assign(gc.buses.size() * 2, nan);
  w.v_ang.assign(gc.buses.size() * 2, nan);
  for (int node = 0; node < sol.graph.node_count; ++node) {
    if (!sol.node_served[node]) continue;
    const int key = sol.graph.node_sub[node] * 2 + (sol.graph.node_busbar[node] - 1);
    w.v_mag[key] = sol.v_mag[node];
    w.v_ang[key] = sol.v_ang[node];
  }
  return w;
}

inline std::vector<double> line_loading(const GridCase& gc, const PowerFlowSolution& sol) {
  std::vector<double> rho(gc.lines.size(), 0.0);
  for (std::size_t i = 0; i < gc.lines.size(); ++i) {
    const double s = std::max(std::abs(sol.s_from_mva[i]), std::abs(sol.s_to_mva[i]));
    rho[i] = s > 0.0 || sol.rho[i] > 0.0 ? s / gc.lines[i].thermal_limit_mva : 0.0;
  }
  return rho;
}

}  // namespace gridrl
