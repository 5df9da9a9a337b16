#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <gridrl/environment.hpp>
#include <gridrl/policy.hpp>
#include <gridrl/rng.hpp>

namespace gridrl {

enum class AgentMode { agent, no_agent };

inline std::string to_string(AgentMode m) {
  return m == AgentMode::agent ? "agent" : "no_agent";
}

struct ContingencyPlan {
  int k = 0;
  std::vector<std::vector<int>> sets;
};

inline ContingencyPlan enumerate_contingencies(int n_lines, int k) {
  if (k < 1 || k > n_lines)
    throw std::invalid_argument("contingency order k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(n_lines) + "]");
  ContingencyPlan plan;
  plan.k = k;
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    plan.sets.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n_lines - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return plan;
}

struct EpisodeResult {
  std::vector<int> set;
  int steps_survived = 0;
  double cumulative_reward = 0.0;
  std::vector<int> cascade_series;  // new cascade trips per executed step
  FailureCause cause = FailureCause::none;
};

inline int total_cascades(const EpisodeResult& r) {
  int total = 0;
  for (int f : r.cascade_series) total += f;
  return total;
}

inline EpisodeResult run_set(const GridCase& gc, const std::vector<int>& set,
                             const DualPolicyBundle* bundle, const EnvConfig& env_cfg) {
  EpisodeResult res;
  res.set = set;
  Environment env(gc, env_cfg);
  if (!env.reset(set)) {
    res.cause = env.failure_cause();
    return res;
  }
  std::mt19937_64 greedy_rng(0);
  while (env.alive()) {
    int action = 0;
    if (bundle)
      action = act(*bundle, env.observation(), env.legal_mask(), true, greedy_rng).action;
    const StepInfo info = env.step(action);
    if (info.done) break;
  }
  res.steps_survived = env.t();
  res.cumulative_reward = env.episode_reward();
  for (const StepRecord& rec : env.trace())
    res.cascade_series.push_back(rec.info.cascading_trips);
  res.cause = env.failure_cause();
  return res;
}

struct ScreeningSummary {
  int k = 0;
  std::size_t sets = 0;
  double mean_survival = 0.0;
  double mean_reward = 0.0;
  double mean_total_cascades = 0.0;
  std::vector<double> cascade_curve;  // F averaged over all sets, 0 beyond death
};

inline ScreeningSummary aggregate(const ContingencyPlan& plan,
                                  const std::vector<EpisodeResult>& results,
                                  int episode_limit) {
  if (results.size() != plan.sets.size())
    throw std::invalid_argument("aggregate needs one result per set: have " +
                                std::to_string(results.size()) + " of " +
                                std::to_string(plan.sets.size()));
  ScreeningSummary s;
  s.k = plan.k;
  s.sets = results.size();
  s.cascade_curve.assign(episode_limit, 0.0);
  for (const EpisodeResult& r : results) {
    s.mean_survival += r.steps_survived;
    s.mean_reward += r.cumulative_reward;
    s.mean_total_cascades += total_cascades(r);
    for (std::size_t t = 0; t < r.cascade_series.size() && t < s.cascade_curve.size(); ++t)
      s.cascade_curve[t] += r.cascade_series[t];
  }
  const double n = static_cast<double>(results.size());
  s.mean_survival /= n;
  s.mean_reward /= n;
  s.mean_total_cascades /= n;
  for (double& f : s.cascade_curve) f /= n;
  return s;
}

struct ScreenSettings {
  std::vector<int> ks = {1, 2, 3};
  bool run_no_agent = true;
  bool run_agent = true;
  std::uint64_t base_seed = 1;
  int jobs = 1;
  std::string out_dir = "screening_out";
  bool resume = true;
  bool progress = false;
};

// opponent on, heavy load, 100-step cap
inline EnvConfig default_screening_env() {
  EnvConfig env;
  env.episode_limit = 100;
  env.opponent.enabled = true;
  env.chronics.load_scale = 1.25;
  return env;
}

struct ModeReport {
  AgentMode mode = AgentMode::no_agent;
  std::vector<ScreeningSummary> per_k;
};

struct ScreenReport {
  std::vector<ModeReport> modes;
  long long fresh_episodes = 0;
  long long resumed_episodes = 0;
  std::string summary_path;
};

namespace detail {

inline std::string join_set(const std::vector<int>& set) {
  std::string out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += '|';
    out += std::to_string(set[i]);
  }
  return out;
}

inline std::string csv_row(int k, const EpisodeResult& r) {
  char reward[32];
  std::snprintf(reward, sizeof reward, "%.6f", r.cumulative_reward);
  return std::to_string(k) + "," + join_set(r.set) + "," + std::to_string(r.steps_survived) +
         "," + reward + "," + std::to_string(total_cascades(r)) + "," + to_string(r.cause);
}

inline json event_line(int k, const EpisodeResult& r) {
  return {{"k", k},
          {"set", r.set},
          {"steps", r.steps_survived},
          {"reward", r.cumulative_reward},
          {"cascades", r.cascade_series},
          {"cause", to_string(r.cause)}};
}

inline FailureCause cause_from_string(const std::string& s) {
  if (s == "divergence") return FailureCause::divergence;
  if (s == "islanded_slack") return FailureCause::islanded_slack;
  return FailureCause::none;
}

// completed episodes from a previous run; events file is the source of truth,
// the csv only caps how many lines count as committed
inline std::vector<std::pair<int, EpisodeResult>> load_completed(
    const std::filesystem::path& csv_path, const std::filesystem::path& events_path) {
  std::vector<std::pair<int, EpisodeResult>> done;
  if (!std::filesystem::exists(csv_path) || !std::filesystem::exists(events_path)) return done;

  std::size_t csv_rows = 0;
  {
    std::ifstream in(csv_path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (!line.empty() && std::count(line.begin(), line.end(), ',') == 5) ++csv_rows;
    }
  }

  std::ifstream in(events_path);
  std::string line;
  while (std::getline(in, line) && done.size() < csv_rows) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      break;  // partial trailing line from an interrupted run
    }
    EpisodeResult r;
    r.set = j.at("set").get<std::vector<int>>();
    r.steps_survived = j.at("steps").get<int>();
    r.cumulative_reward = j.at("reward").get<double>();
    r.cascade_series = j.at("cascades").get<std::vector<int>>();
    r.cause = cause_from_string(j.at("cause").get<std::string>());
    done.emplace_back(j.at("k").get<int>(), std::move(r));
  }
  return done;
}

}  // namespace detail

inline ScreenReport screen(const GridCase& gc, const ScreenSettings& settings,
                           const EnvConfig& env_base, const DualPolicyBundle* bundle,
                           const json& config_echo = json::object()) {
  if (settings.run_agent && bundle == nullptr)
    throw std::invalid_argument("agent mode requires a policy bundle");
  if (settings.ks.empty()) throw std::invalid_argument("no contingency orders requested");

  namespace fs = std::filesystem;
  fs::create_directories(settings.out_dir);
  ScreenReport report;

  std::vector<AgentMode> modes;
  if (settings.run_no_agent) modes.push_back(AgentMode::no_agent);
  if (settings.run_agent) modes.push_back(AgentMode::agent);

  const int n_lines = static_cast<int>(gc.lines.size());

  for (const AgentMode mode : modes) {
    const fs::path csv_path = fs::path(settings.out_dir) / ("screening_" + to_string(mode) + ".csv");
    const fs::path ev_path =
        fs::path(settings.out_dir) / ("screening_" + to_string(mode) + "_cascades.jsonl");

    std::vector<std::pair<int, EpisodeResult>> completed;
    if (settings.resume) completed = detail::load_completed(csv_path, ev_path);

    // keep only the prefix that matches this run's enumeration order; anything
    // else is from a run with different settings and gets recomputed
    {
      std::size_t keep = 0;
      for (const int k : settings.ks) {
        const ContingencyPlan plan = enumerate_contingencies(n_lines, k);
        std::size_t i = 0;
        while (keep < completed.size() && i < plan.sets.size() &&
               completed[keep].first == k && completed[keep].second.set == plan.sets[i]) {
          ++keep;
          ++i;
        }
        if (i < plan.sets.size()) break;
      }
      completed.resize(keep);
    }
    report.resumed_episodes += static_cast<long long>(completed.size());

    // rewrite the committed prefix so both files are consistent before appending
    std::ofstream csv(csv_path, std::ios::trunc);
    std::ofstream events(ev_path, std::ios::trunc);
    if (!csv || !events)
      throw std::runtime_error("cannot open screening outputs under " + settings.out_dir);
    csv << "k,set,steps_survived,cum_reward,total_cascades,failure_cause\n";
    for (const auto& [k, r] : completed) {
      csv << detail::csv_row(k, r) << "\n";
      events << detail::event_line(k, r).dump() << "\n";
    }
    csv.flush();
    events.flush();

    ModeReport mode_report;
    mode_report.mode = mode;
    const DualPolicyBundle* mode_bundle = mode == AgentMode::agent ? bundle : nullptr;
    std::size_t consumed = 0;  // completed episodes already attributed to earlier ks

    for (const int k : settings.ks) {
      const ContingencyPlan plan = enumerate_contingencies(n_lines, k);
      const std::size_t count = plan.sets.size();
      std::vector<EpisodeResult> results(count);

      std::size_t start = 0;
      while (start < count && consumed < completed.size() &&
             completed[consumed].first == k && completed[consumed].second.set == plan.sets[start]) {
        results[start] = std::move(completed[consumed].second);
        ++consumed;
        ++start;
      }

      if (start < count) {
        auto run_one = [&](std::size_t i) {
          EnvConfig ec = env_base;
          ec.seed = mix_seed(settings.base_seed, static_cast<std::uint64_t>(k),
                             static_cast<std::uint64_t>(i));
          return run_set(gc, plan.sets[i], mode_bundle, ec);
        };

        if (settings.jobs <= 1) {
          for (std::size_t i = start; i < count; ++i) {
            results[i] = run_one(i);
            csv << detail::csv_row(k, results[i]) << "\n";
            events << detail::event_line(k, results[i]).dump() << "\n";
            csv.flush();
            events.flush();
            ++report.fresh_episodes;
            if (settings.progress && ((i + 1) % 50 == 0 || i + 1 == count))
              std::fprintf(stderr, "[screen] %s k=%d %zu/%zu\n", to_string(mode).c_str(), k,
                           i + 1, count);
          }
        } else {
          std::atomic<std::size_t> next{start};
          std::unique_ptr<std::atomic<bool>[]> ready(new std::atomic<bool>[count]);
          for (std::size_t i = 0; i < count; ++i) ready[i].store(false);

          std::vector<std::thread> workers;
          for (int w = 0; w < settings.jobs; ++w)
            workers.emplace_back([&] {
              while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                results[i] = run_one(i);
                ready[i].store(true, std::memory_order_release);
              }
            });

          for (std::size_t i = start; i < count; ++i) {
            while (!ready[i].load(std::memory_order_acquire))
              std::this_thread::sleep_for(std::chrono::microseconds(200));
            csv << detail::csv_row(k, results[i]) << "\n";
            events << detail::event_line(k, results[i]).dump() << "\n";
            csv.flush();
            events.flush();
            ++report.fresh_episodes;
            if (settings.progress && ((i + 1) % 50 == 0 || i + 1 == count))
              std::fprintf(stderr, "[screen] %s k=%d %zu/%zu\n", to_string(mode).c_str(), k,
                           i + 1, count);
          }
          for (std::thread& t : workers) t.join();
        }
      }

      mode_report.per_k.push_back(aggregate(plan, results, env_base.episode_limit));
    }
    report.modes.push_back(std::move(mode_report));
  }

  json summary = {{"schema_version", 1},
                  {"base_seed", settings.base_seed},
                  {"episode_limit", env_base.episode_limit},
                  {"ks", settings.ks},
                  {"config", config_echo},
                  {"modes", json::object()}};
  for (const ModeReport& mr : report.modes) {
    json per_k = json::object();
    for (const ScreeningSummary& s : mr.per_k)
      per_k[std::to_string(s.k)] = {{"sets", s.sets},
                                    {"mean_survival", s.mean_survival},
                                    {"mean_reward", s.mean_reward},
                                    {"mean_total_cascades", s.mean_total_cascades},
                                    {"cascade_curve", s.cascade_curve}};
    summary["modes"][to_string(mr.mode)] = std::move(per_k);
  }
  const fs::path summary_path = fs::path(settings.out_dir) / "summary.json";
  std::ofstream out(summary_path);
  if (!out) throw std::runtime_error("cannot write " + summary_path.string());
  out << summary.dump(2) << "\n";
  report.summary_path = summary_path.string();
  return report;
}

}  // namespace gridrl
