#pragma once

// Static grid description: buses, lines, generators, loads, and the bundled
// modified IEEE 14-bus case. All electrical quantities are per-unit on the
// system base except thermal limits (MVA) and load setpoints (MW / MVAr).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace gridrl {

using json = nlohmann::json;

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double base_kv = 0.0;
};

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double r_pu = 0.0;
  double x_pu = 0.0;
  double b_charging_pu = 0.0;
  double tap_ratio = 1.0;  // fixed off-nominal turns ratio, from side
  double thermal_limit_mva = 0.0;
};

struct Gen {
  int bus = 0;
  double p_set_mw = 0.0;
  double v_set_pu = 1.0;
  double q_min_mvar = 0.0;
  double q_max_mvar = 0.0;
};

struct Load {
  int bus = 0;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Gen> generators;
  std::vector<Load> loads;

  int bus_index(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == bus_id) return static_cast<int>(i);
    return -1;
  }

  int slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].kind == BusKind::slack) return static_cast<int>(i);
    return -1;
  }

  double total_load_mw() const {
    double p = 0.0;
    for (const auto& l : loads) p += l.p_mw;
    return p;
  }
};

inline void validate(const GridCase& gc) {
  if (gc.base_mva <= 0.0) throw ValidationError("base_mva must be positive");
  if (gc.buses.empty()) throw ValidationError("case has no buses");

  int slack_count = 0;
  std::unordered_map<int, int> bus_ids;
  for (const auto& b : gc.buses) {
    if (bus_ids.count(b.id)) throw ValidationError("duplicate bus id " + std::to_string(b.id));
    bus_ids[b.id] = 1;
    if (b.kind == BusKind::slack) ++slack_count;
  }
  if (slack_count == 0) throw ValidationError("no slack bus");
  if (slack_count > 1) throw ValidationError("multiple slack buses");

  std::unordered_map<int, int> line_ids;
  for (const auto& l : gc.lines) {
    if (line_ids.count(l.id)) throw ValidationError("duplicate line id " + std::to_string(l.id));
    line_ids[l.id] = 1;
    if (!bus_ids.count(l.from_bus))
      throw ValidationError("line " + std::to_string(l.id) + " references nonexistent from_bus " +
                            std::to_string(l.from_bus));
    if (!bus_ids.count(l.to_bus))
      throw ValidationError("line " + std::to_string(l.id) + " references nonexistent to_bus " +
                            std::to_string(l.to_bus));
    if (l.from_bus == l.to_bus)
      throw ValidationError("line " + std::to_string(l.id) + " is a self-loop");
    if (l.x_pu == 0.0)
      throw ValidationError("line " + std::to_string(l.id) + " has zero reactance");
    if (l.thermal_limit_mva <= 0.0)
      throw ValidationError("line " + std::to_string(l.id) + " has nonpositive thermal limit");
    if (l.tap_ratio <= 0.0)
      throw ValidationError("line " + std::to_string(l.id) + " has nonpositive tap ratio");
  }
  for (const auto& g : gc.generators)
    if (!bus_ids.count(g.bus))
      throw ValidationError("generator references nonexistent bus " + std::to_string(g.bus));
  for (const auto& l : gc.loads)
    if (!bus_ids.count(l.bus))
      throw ValidationError("load references nonexistent bus " + std::to_string(l.bus));
}

inline json case_to_json(const GridCase& gc) {
  json j;
  j["schema_version"] = 1;
  j["base_mva"] = gc.base_mva;
  j["buses"] = json::array();
  for (const auto& b : gc.buses) {
    const char* kind = b.kind == BusKind::slack ? "slack" : (b.kind == BusKind::pv ? "pv" : "pq");
    j["buses"].push_back({{"id", b.id}, {"kind", kind}, {"base_kv", b.base_kv}});
  }
  j["lines"] = json::array();
  for (const auto& l : gc.lines)
    j["lines"].push_back({{"id", l.id},
                          {"from_bus", l.from_bus},
                          {"to_bus", l.to_bus},
                          {"r_pu", l.r_pu},
                          {"x_pu", l.x_pu},
                          {"b_charging_pu", l.b_charging_pu},
                          {"tap_ratio", l.tap_ratio},
                          {"thermal_limit_mva", l.thermal_limit_mva}});
  j["generators"] = json::array();
  for (const auto& g : gc.generators)
    j["generators"].push_back({{"bus", g.bus},
                               {"p_set_mw", g.p_set_mw},
                               {"v_set_pu", g.v_set_pu},
                               {"q_min_mvar", g.q_min_mvar},
                               {"q_max_mvar", g.q_max_mvar}});
  j["loads"] = json::array();
  for (const auto& l : gc.loads)
    j["loads"].push_back({{"bus", l.bus}, {"p_mw", l.p_mw}, {"q_mvar", l.q_mvar}});
  return j;
}

inline GridCase case_from_json(const json& j) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
    throw ParseError("unsupported or missing schema_version (expected 1)");
  GridCase gc;
  try {
    gc.base_mva = j.at("base_mva").get<double>();
    for (const auto& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      const std::string kind = jb.at("kind").get<std::string>();
      if (kind == "slack")
        b.kind = BusKind::slack;
      else if (kind == "pv")
        b.kind = BusKind::pv;
      else if (kind == "pq")
        b.kind = BusKind::pq;
      else
        throw ParseError("unknown bus kind '" + kind + "'");
      b.base_kv = jb.at("base_kv").get<double>();
      gc.buses.push_back(b);
    }
    for (const auto& jl : j.at("lines")) {
      Line l;
      l.id = jl.at("id").get<int>();
      l.from_bus = jl.at("from_bus").get<int>();
      l.to_bus = jl.at("to_bus").get<int>();
      l.r_pu = jl.at("r_pu").get<double>();
      l.x_pu = jl.at("x_pu").get<double>();
      l.b_charging_pu = jl.at("b_charging_pu").get<double>();
      l.tap_ratio = jl.value("tap_ratio", 1.0);
      l.thermal_limit_mva = jl.at("thermal_limit_mva").get<double>();
      gc.lines.push_back(l);
    }
    for (const auto& jg : j.at("generators")) {
      Gen g;
      g.bus = jg.at("bus").get<int>();
      g.p_set_mw = jg.at("p_set_mw").get<double>();
      g.v_set_pu = jg.at("v_set_pu").get<double>();
      g.q_min_mvar = jg.at("q_min_mvar").get<double>();
      g.q_max_mvar = jg.at("q_max_mvar").get<double>();
      gc.generators.push_back(g);
    }
    for (const auto& jl : j.at("loads")) {
      Load l;
      l.bus = jl.at("bus").get<int>();
      l.p_mw = jl.at("p_mw").get<double>();
      l.q_mvar = jl.at("q_mvar").get<double>();
      gc.loads.push_back(l);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed case file: ") + e.what());
  }
  validate(gc);
  return gc;
}

inline GridCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
  return case_from_json(j);
}

inline void save_case(const GridCase& gc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write case file: " + path);
  out << case_to_json(gc).dump(2) << "\n";
}

// Modified IEEE 14-bus case: standard branch impedances, tap ratios and load
// data; a sixth generator (synchronous condenser) at bus 9 stands in for the
// standard bus-9 shunt capacitor so the base solution stays on the published
// values. Thermal limits are sized so the case rides through any single line
// outage at 125% loading.
inline GridCase bundled_ieee14() {
  GridCase gc;
  gc.base_mva = 100.0;

  auto bus = [&](int id, BusKind k, double kv) { gc.buses.push_back({id, k, kv}); };
  bus(1, BusKind::slack, 69.0);
  bus(2, BusKind::pv, 69.0);
  bus(3, BusKind::pv, 69.0);
  bus(4, BusKind::pq, 69.0);
  bus(5, BusKind::pq, 69.0);
  bus(6, BusKind::pv, 13.8);
  bus(7, BusKind::pq, 13.8);
  bus(8, BusKind::pv, 18.0);
  bus(9, BusKind::pv, 13.8);  // hosts the added sixth generator
  bus(10, BusKind::pq, 13.8);
  bus(11, BusKind::pq, 13.8);
  bus(12, BusKind::pq, 13.8);
  bus(13, BusKind::pq, 13.8);
  bus(14, BusKind::pq, 13.8);

  int next_id = 0;
  auto line = [&](int f, int t, double r, double x, double b, double tap, double lim) {
    gc.lines.push_back({next_id++, f, t, r, x, b, tap, lim});
  };
  line(1, 2, 0.01938, 0.05917, 0.0528, 1.0, 370.0);
  line(1, 5, 0.05403, 0.22304, 0.0492, 1.0, 440.0);
  line(2, 3, 0.04699, 0.19797, 0.0438, 1.0, 150.0);
  line(2, 4, 0.05811, 0.17632, 0.0340, 1.0, 145.0);
  line(2, 5, 0.05695, 0.17388, 0.0346, 1.0, 120.0);
  line(3, 4, 0.06701, 0.17103, 0.0128, 1.0, 165.0);
  line(4, 5, 0.01335, 0.04211, 0.0, 1.0, 240.0);
  line(4, 7, 0.0, 0.20912, 0.0, 0.978, 90.0);
  line(4, 9, 0.0, 0.55618, 0.0, 0.969, 50.0);
  line(5, 6, 0.0, 0.25202, 0.0, 0.932, 95.0);
  line(6, 11, 0.09498, 0.19890, 0.0, 1.0, 40.0);
  line(6, 12, 0.12291, 0.25581, 0.0, 1.0, 30.0);
  line(6, 13, 0.06615, 0.13027, 0.0, 1.0, 45.0);
  line(7, 8, 0.0, 0.17615, 0.0, 1.0, 30.0);
  line(7, 9, 0.0, 0.11001, 0.0, 1.0, 90.0);
  line(9, 10, 0.03181, 0.08450, 0.0, 1.0, 55.0);
  line(9, 14, 0.12711, 0.27038, 0.0, 1.0, 45.0);
  line(10, 11, 0.08205, 0.19207, 0.0, 1.0, 45.0);
  line(12, 13, 0.22092, 0.19988, 0.0, 1.0, 20.0);
  line(13, 14, 0.17093, 0.34802, 0.0, 1.0, 25.0);

  auto gen = [&](int b, double p, double v, double qmin, double qmax) {
    gc.generators.push_back({b, p, v, qmin, qmax});
  };
  gen(1, 232.4, 1.06, -999.0, 999.0);  // slack, limits not enforced
  gen(2, 40.0, 1.045, -40.0, 50.0);
  gen(3, 0.0, 1.01, 0.0, 40.0);
  gen(6, 0.0, 1.07, -6.0, 24.0);
  gen(8, 0.0, 1.09, -6.0, 24.0);
  gen(9, 0.0, 1.0559, -6.0, 24.0);

  auto load = [&](int b, double p, double q) { gc.loads.push_back({b, p, q}); };
  load(2, 21.7, 12.7);
  load(3, 94.2, 19.0);
  load(4, 47.8, -3.9);
  load(5, 7.6, 1.6);
  load(6, 11.2, 7.5);
  load(9, 29.5, 16.6);
  load(10, 9.0, 5.8);
  load(11, 3.5, 1.8);
  load(12, 6.1, 1.6);
  load(13, 13.5, 5.8);
  load(14, 14.9, 5.0);

  validate(gc);
  return gc;
}

}  // namespace gridrl
