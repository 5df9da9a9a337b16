#pragma once

// Discrete topology actions over a fixed case: one no-op, reconnect and
// disconnect per line, and one busbar-split toggle per substation. The
// enumeration is frozen by the case so policies and checkpoints agree on
// action indices.

#include <cstdint>
#include <string>
#include <vector>

#include "grid_case.hpp"
#include "topology.hpp"

namespace gridrl {

enum class ActionKind : std::uint8_t { do_nothing, reconnect, disconnect, toggle_split };

struct Action {
  ActionKind kind = ActionKind::do_nothing;
  int target = -1;  // line index or substation index
};

class ActionSpace {
 public:
  explicit ActionSpace(const GridCase& gc)
      : n_lines_(static_cast<int>(gc.lines.size())),
        n_subs_(static_cast<int>(gc.buses.size())) {
    // elements per substation, line ends first (sorted by line id, from end
    // before to end), then generators, then loads
    sub_line_ends_.resize(n_subs_);
    sub_gens_.resize(n_subs_);
    sub_loads_.resize(n_subs_);
    for (int i = 0; i < n_lines_; ++i) {
      sub_line_ends_[gc.bus_index(gc.lines[i].from_bus)].push_back({i, 0});
      sub_line_ends_[gc.bus_index(gc.lines[i].to_bus)].push_back({i, 1});
    }
    for (std::size_t g = 0; g < gc.generators.size(); ++g)
      sub_gens_[gc.bus_index(gc.generators[g].bus)].push_back(static_cast<int>(g));
    for (std::size_t l = 0; l < gc.loads.size(); ++l)
      sub_loads_[gc.bus_index(gc.loads[l].bus)].push_back(static_cast<int>(l));
  }

  int size() const { return 1 + 2 * n_lines_ + n_subs_; }

  Action decode(int idx) const {
    if (idx == 0) return {ActionKind::do_nothing, -1};
    if (idx <= n_lines_) return {ActionKind::reconnect, idx - 1};
    if (idx <= 2 * n_lines_) return {ActionKind::disconnect, idx - n_lines_ - 1};
    return {ActionKind::toggle_split, idx - 2 * n_lines_ - 1};
  }

  int encode(const Action& a) const {
    switch (a.kind) {
      case ActionKind::do_nothing: return 0;
      case ActionKind::reconnect: return 1 + a.target;
      case ActionKind::disconnect: return 1 + n_lines_ + a.target;
      case ActionKind::toggle_split: return 1 + 2 * n_lines_ + a.target;
    }
    return 0;
  }

  bool split_possible(int sub) const { return sub_line_ends_[sub].size() >= 2; }

  bool substation_is_split(const Topology& topo, int sub) const {
    for (const auto& [line, end] : sub_line_ends_[sub])
      if ((end == 0 ? topo.line_busbar_from[line] : topo.line_busbar_to[line]) != 1) return true;
    for (int g : sub_gens_[sub])
      if (topo.gen_busbar[g] != 1) return true;
    for (int l : sub_loads_[sub])
      if (topo.load_busbar[l] != 1) return true;
    return false;
  }

  // deterministic split pattern: line ends alternate busbars, generators and
  // loads interleave so neither busbar is left source- or sink-only
  void apply_split(Topology& topo, int sub) const {
    int k = 0;
    for (const auto& [line, end] : sub_line_ends_[sub]) {
      const std::uint8_t bb = k++ % 2 == 0 ? 1 : 2;
      (end == 0 ? topo.line_busbar_from[line] : topo.line_busbar_to[line]) = bb;
    }
    k = 1;
    for (int g : sub_gens_[sub]) topo.gen_busbar[g] = k++ % 2 == 0 ? 1 : 2;
    k = 0;
    for (int l : sub_loads_[sub]) topo.load_busbar[l] = k++ % 2 == 0 ? 1 : 2;
  }

  void apply_unify(Topology& topo, int sub) const {
    for (const auto& [line, end] : sub_line_ends_[sub])
      (end == 0 ? topo.line_busbar_from[line] : topo.line_busbar_to[line]) = 1;
    for (int g : sub_gens_[sub]) topo.gen_busbar[g] = 1;
    for (int l : sub_loads_[sub]) topo.load_busbar[l] = 1;
  }

  bool legal(const Action& a, const Topology& topo, int t) const {
    switch (a.kind) {
      case ActionKind::do_nothing: return true;
      case ActionKind::reconnect:
        return topo.line_status[a.target] == 0 && !topo.line_locked(a.target, t);
      case ActionKind::disconnect: return topo.line_status[a.target] == 1;
      case ActionKind::toggle_split: return split_possible(a.target);
    }
    return false;
  }

  std::vector<std::uint8_t> legal_mask(const Topology& topo, int t) const {
    std::vector<std::uint8_t> mask(size());
    for (int i = 0; i < size(); ++i) mask[i] = legal(decode(i), topo, t) ? 1 : 0;
    return mask;
  }

  std::string describe(int idx, const GridCase& gc) const {
    const Action a = decode(idx);
    switch (a.kind) {
      case ActionKind::do_nothing: return "noop";
      case ActionKind::reconnect: return "reconnect line " + std::to_string(a.target);
      case ActionKind::disconnect: return "disconnect line " + std::to_string(a.target);
      case ActionKind::toggle_split:
        return "toggle busbars at bus " + std::to_string(gc.buses[a.target].id);
    }
    return "?";
  }

 private:
  int n_lines_;
  int n_subs_;
  std::vector<std::vector<std::pair<int, int>>> sub_line_ends_;  // (line, end 0=from 1=to)
  std::vector<std::vector<int>> sub_gens_;
  std::vector<std::vector<int>> sub_loads_;
};

}  // namespace gridrl
