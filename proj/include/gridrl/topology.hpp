#pragma once

// Switching state on top of a GridCase: per-line service status, busbar
// assignment of every element (each substation has two busbars), and
// reconnection lockouts. The live graph realizes the electrical nodes:
// one node per energized busbar. A busbar is energized when at least one
// in-service line end, generator or load sits on it; busbars of
// out-of-service line ends carry no equipment.

#include <cstdint>
#include <utility>
#include <vector>

#include "grid_case.hpp"

namespace gridrl {

struct Topology {
  std::vector<std::uint8_t> line_status;       // 1 = in service
  std::vector<std::uint8_t> line_busbar_from;  // 1 or 2
  std::vector<std::uint8_t> line_busbar_to;
  std::vector<std::uint8_t> gen_busbar;
  std::vector<std::uint8_t> load_busbar;
  std::vector<int> lockout_until;  // line may reconnect at t >= lockout_until[i]

  static Topology identity(const GridCase& gc) {
    Topology t;
    t.line_status.assign(gc.lines.size(), 1);
    t.line_busbar_from.assign(gc.lines.size(), 1);
    t.line_busbar_to.assign(gc.lines.size(), 1);
    t.gen_busbar.assign(gc.generators.size(), 1);
    t.load_busbar.assign(gc.loads.size(), 1);
    t.lockout_until.assign(gc.lines.size(), 0);
    return t;
  }

  bool line_locked(int line, int t) const { return t < lockout_until[line]; }

  int lines_in_service() const {
    int n = 0;
    for (auto s : line_status) n += s;
    return n;
  }

  bool operator==(const Topology&) const = default;
};

struct LiveGraph {
  int node_count = 0;
  // node index per (substation, busbar); -1 when the busbar is dead
  std::vector<int> node_of_busbar;  // size 2 * n_subs, index sub * 2 + (busbar - 1)
  std::vector<int> node_sub;        // substation (bus array index) per node
  std::vector<std::uint8_t> node_busbar;
  std::vector<int> node_of_gen;   // -1 when the generator's busbar is dead (never in practice)
  std::vector<int> node_of_load;
  std::vector<std::pair<int, int>> edges;  // (from node, to node) per in-service line
  std::vector<int> edge_line;              // line id per edge

  int node_at(int sub, int busbar) const { return node_of_busbar[sub * 2 + busbar - 1]; }
};

inline LiveGraph live_graph(const GridCase& gc, const Topology& topo) {
  const int n_subs = static_cast<int>(gc.buses.size());
  std::vector<std::uint8_t> energized(2 * n_subs, 0);

  auto mark = [&](int bus_id, std::uint8_t busbar) {
    const int sub = gc.bus_index(bus_id);
    energized[sub * 2 + busbar - 1] = 1;
  };

  for (std::size_t i = 0; i < gc.lines.size(); ++i) {
    if (!topo.line_status[i]) continue;
    mark(gc.lines[i].from_bus, topo.line_busbar_from[i]);
    mark(gc.lines[i].to_bus, topo.line_busbar_to[i]);
  }
  for (std::size_t g = 0; g < gc.generators.size(); ++g)
    mark(gc.generators[g].bus, topo.gen_busbar[g]);
  for (std::size_t l = 0; l < gc.loads.size(); ++l)
    mark(gc.loads[l].bus, topo.load_busbar[l]);

  LiveGraph lg;
  lg.node_of_busbar.assign(2 * n_subs, -1);
  for (int s = 0; s < n_subs; ++s)
    for (int b = 0; b < 2; ++b)
      if (energized[s * 2 + b]) {
        lg.node_of_busbar[s * 2 + b] = lg.node_count++;
        lg.node_sub.push_back(s);
        lg.node_busbar.push_back(static_cast<std::uint8_t>(b + 1));
      }

  auto node_of = [&](int bus_id, std::uint8_t busbar) {
    return lg.node_of_busbar[gc.bus_index(bus_id) * 2 + busbar - 1];
  };

  for (std::size_t i = 0; i < gc.lines.size(); ++i) {
    if (!topo.line_status[i]) continue;
    lg.edges.emplace_back(node_of(gc.lines[i].from_bus, topo.line_busbar_from[i]),
                          node_of(gc.lines[i].to_bus, topo.line_busbar_to[i]));
    lg.edge_line.push_back(gc.lines[i].id);
  }
  for (std::size_t g = 0; g < gc.generators.size(); ++g)
    lg.node_of_gen.push_back(node_of(gc.generators[g].bus, topo.gen_busbar[g]));
  for (std::size_t l = 0; l < gc.loads.size(); ++l)
    lg.node_of_load.push_back(node_of(gc.loads[l].bus, topo.load_busbar[l]));

  return lg;
}

}  // namespace gridrl
