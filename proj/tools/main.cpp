#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gridrl/run_config.hpp>

namespace fs = std::filesystem;
using namespace gridrl;

namespace {

// exit codes: 0 success, 1 usage, 2 input/parse, 3 numerical, 4 I/O
struct ExitError {
  int code;
  std::string message;
};

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& sets,
                      bool screening_defaults) {
  json tree = json::object();
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw ExitError{4, "cannot open config file: " + config_path};
    std::ifstream in(config_path);
    try {
      in >> tree;
    } catch (const json::exception& e) {
      throw ExitError{2, "config parse error in " + config_path + ": " + e.what()};
    }
    try {
      validate_config_tree(tree, config_schema());
    } catch (const ConfigError& e) {
      throw ExitError{2, std::string(e.what()) + " in " + config_path};
    }
  }
  for (const std::string& spec : sets) {
    try {
      tree.merge_patch(override_patch(spec, config_schema()));
    } catch (const ConfigError& e) {
      throw ExitError{1, e.what()};
    }
  }
  RunConfig cfg;
  if (screening_defaults) cfg.env = default_screening_env();
  if (tree.value("ppo_raw_table", false)) cfg.ppo = raw_table_config();
  try {
    tree.get_to(cfg);
  } catch (const json::exception& e) {
    throw ExitError{2, std::string("config error: ") + e.what()};
  }
  return cfg;
}

GridCase load_grid(const std::string& case_path) {
  if (case_path.empty()) return bundled_ieee14();
  if (!fs::exists(case_path)) throw ExitError{4, "cannot open case file: " + case_path};
  return load_case(case_path);
}

DualPolicyBundle load_checkpoint_for(const GridCase& gc, const std::string& path) {
  if (!fs::exists(path)) throw ExitError{2, "missing checkpoint: " + path};
  DualPolicyBundle bundle = load_bundle(path);
  const int actions = ActionSpace(gc).size();
  if (bundle.general_arch.actions != actions)
    throw ExitError{2, "checkpoint was trained for " +
                           std::to_string(bundle.general_arch.actions) + " actions, case has " +
                           std::to_string(actions)};
  return bundle;
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      ks.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ExitError{1, "bad --k entry: " + item};
    }
  }
  if (ks.empty()) throw ExitError{1, "--k needs at least one value"};
  return ks;
}

int cmd_validate(const std::string& case_path) {
  const GridCase gc = load_grid(case_path);
  validate(gc);
  std::printf("%zu buses, %zu lines, %zu generators, %zu loads, base %.0f MVA\n",
              gc.buses.size(), gc.lines.size(), gc.generators.size(), gc.loads.size(),
              gc.base_mva);

  const Topology topo = Topology::identity(gc);
  const PowerFlowSolution sol = solve_power_flow(gc, topo, nominal_injections(gc), {});
  if (sol.status != SolveStatus::converged) {
    std::printf("base power flow failed: %s\n",
                sol.status == SolveStatus::diverged ? "diverged" : "slack islanded");
    return 3;
  }
  double max_rho = 0.0;
  for (double r : sol.rho) max_rho = std::max(max_rho, r);
  std::printf("base power flow converged in %d iterations, max line loading %.4f\n",
              sol.iterations, max_rho);
  return 0;
}

int cmd_train(const RunConfig& cfg, std::optional<long long> steps, const std::string& from,
              const std::string& out, const std::string& log_path) {
  const GridCase gc = load_grid(cfg.case_path);
  const int actions = ActionSpace(gc).size();
  DualPolicyBundle bundle =
      from.empty() ? make_bundle(actions, cfg.seed) : load_checkpoint_for(gc, from);

  TrainSchedule schedule = cfg.schedule;
  if (steps) {
    schedule.phase1_steps = *steps * 2 / 5;
    schedule.phase2_steps = *steps - schedule.phase1_steps;
    schedule.phase3_steps = 0;
  }
  schedule.checkpoint_path = out;

  try {
    validate(cfg.ppo);
  } catch (const std::invalid_argument& e) {
    throw ExitError{2, e.what()};
  }

  const TrainResult result = train(gc, bundle, cfg.ppo, schedule, cfg.env, cfg.seed);

  std::ofstream log(log_path);
  if (!log) throw ExitError{4, "cannot write log file: " + log_path};
  log << json{{"event", "config"}, {"config", cfg}}.dump() << "\n";
  for (const json& line : result.log) log << line.dump() << "\n";

  std::printf("trained %lld env steps across %zu log events\n", result.env_steps,
              result.log.size());
  std::printf("checkpoint: %s\nlog: %s\n", out.c_str(), log_path.c_str());
  return 0;
}

int cmd_screen(const RunConfig& cfg, ScreenSettings settings, const std::string& checkpoint) {
  const GridCase gc = load_grid(cfg.case_path);
  settings.base_seed = cfg.seed;

  DualPolicyBundle bundle;
  const DualPolicyBundle* bundle_ptr = nullptr;
  if (settings.run_agent) {
    bundle = load_checkpoint_for(gc, checkpoint);
    bundle_ptr = &bundle;
  }

  RunConfig echo = cfg;
  echo.screening = settings;
  echo.checkpoint = checkpoint;
  const ScreenReport report = screen(gc, settings, cfg.env, bundle_ptr, json(echo));
  if (report.modes.empty()) throw ExitError{1, "no modes requested"};

  std::printf("average steps survived (limit %d)\n", cfg.env.episode_limit);
  std::printf("%-4s %-8s", "k", "sets");
  for (const ModeReport& mr : report.modes) std::printf(" %14s", to_string(mr.mode).c_str());
  std::printf("\n");
  for (std::size_t i = 0; i < report.modes.front().per_k.size(); ++i) {
    const ScreeningSummary& first = report.modes.front().per_k[i];
    std::printf("%-4d %-8zu", first.k, first.sets);
    for (const ModeReport& mr : report.modes) std::printf(" %14.2f", mr.per_k[i].mean_survival);
    std::printf("\n");
  }
  std::printf("episodes: %lld fresh, %lld resumed\nsummary: %s\n", report.fresh_episodes,
              report.resumed_episodes, report.summary_path.c_str());
  return 0;
}

struct CsvRow {
  int k = 0;
  std::string set;
  int steps = 0;
  double reward = 0.0;
  int cascades = 0;
  std::string cause;
};

std::vector<CsvRow> read_screening_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ExitError{4, "cannot open " + path.string()};
  std::vector<CsvRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    CsvRow row;
    std::string field;
    std::getline(ss, field, ',');
    row.k = std::stoi(field);
    std::getline(ss, row.set, ',');
    std::getline(ss, field, ',');
    row.steps = std::stoi(field);
    std::getline(ss, field, ',');
    row.reward = std::stod(field);
    std::getline(ss, field, ',');
    row.cascades = std::stoi(field);
    std::getline(ss, row.cause, ',');
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_report(const std::string& run_dir, std::string out_dir) {
  const fs::path dir(run_dir);
  const fs::path summary_path = dir / "summary.json";
  if (!fs::exists(summary_path)) throw ExitError{1, "no screening outputs in " + run_dir};
  if (out_dir.empty()) out_dir = run_dir;
  fs::create_directories(out_dir);

  json summary;
  {
    std::ifstream in(summary_path);
    try {
      in >> summary;
    } catch (const json::exception& e) {
      throw ExitError{2, "cannot parse " + summary_path.string() + ": " + e.what()};
    }
  }

  std::vector<std::string> modes;
  for (const auto& [mode, block] : summary.at("modes").items()) modes.push_back(mode);
  std::map<std::string, std::vector<CsvRow>> rows;
  std::vector<std::string> written;

  for (const std::string& mode : modes) {
    rows[mode] = read_screening_csv(dir / ("screening_" + mode + ".csv"));

    const fs::path survival = fs::path(out_dir) / ("survival_" + mode + ".csv");
    std::ofstream out(survival);
    out << "k,set,steps_survived\n";
    for (const CsvRow& r : rows[mode])
      out << r.k << "," << r.set << "," << r.steps << "\n";
    written.push_back(survival.string());

    for (const auto& [k_str, block] : summary.at("modes").at(mode).items()) {
      const fs::path curve_path =
          fs::path(out_dir) / ("cascade_curve_" + mode + "_k" + k_str + ".csv");
      std::ofstream curve(curve_path);
      curve << "t,mean_cascades\n";
      const auto& values = block.at("cascade_curve");
      for (std::size_t t = 0; t < values.size(); ++t) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", values[t].get<double>());
        curve << t << "," << buf << "\n";
      }
      written.push_back(curve_path.string());
    }
  }

  if (rows.count("agent") && rows.count("no_agent")) {
    const auto& agent = rows["agent"];
    const auto& baseline = rows["no_agent"];
    if (agent.size() != baseline.size())
      throw ExitError{2, "agent and no_agent tables have different row counts"};
    struct Pair {
      int k;
      std::string set;
      int no_agent, agent, gap;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < agent.size(); ++i) {
      if (agent[i].k != baseline[i].k || agent[i].set != baseline[i].set)
        throw ExitError{2, "agent and no_agent tables enumerate different sets"};
      pairs.push_back({agent[i].k, agent[i].set, baseline[i].steps, agent[i].steps,
                       agent[i].steps - baseline[i].steps});
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.gap > b.gap; });
    const fs::path cmp_path = fs::path(out_dir) / "comparison.csv";
    std::ofstream cmp(cmp_path);
    cmp << "k,set,steps_no_agent,steps_agent,gap\n";
    for (const Pair& p : pairs)
      cmp << p.k << "," << p.set << "," << p.no_agent << "," << p.agent << "," << p.gap << "\n";
    written.push_back(cmp_path.string());
  }

  // loading time-series for the first set of each order, replayed from the
  // echoed config so the traces match the screening episodes exactly
  if (summary.contains("config") && summary.at("config").contains("env") &&
      summary.contains("base_seed")) {
    RunConfig echo;
    try {
      summary.at("config").get_to(echo);
    } catch (const json::exception&) {
      echo = RunConfig{};
    }
    const GridCase gc = load_grid(echo.case_path);
    const std::uint64_t base_seed = summary.at("base_seed").get<std::uint64_t>();

    DualPolicyBundle bundle;
    bool have_bundle = false;
    if (rows.count("agent") && fs::exists(echo.checkpoint)) {
      try {
        bundle = load_bundle(echo.checkpoint);
        have_bundle = bundle.general_arch.actions == ActionSpace(gc).size();
      } catch (const CheckpointError&) {
        have_bundle = false;
      }
    }

    for (const std::string& mode : modes) {
      if (mode == "agent" && !have_bundle) {
        std::fprintf(stderr, "note: checkpoint unavailable, skipping agent loading series\n");
        continue;
      }
      for (const auto& [k_str, block] : summary.at("modes").at(mode).items()) {
        const int k = std::stoi(k_str);
        const std::vector<int> set = enumerate_contingencies(gc.lines.size(), k).sets.front();
        EnvConfig ec = echo.env;
        ec.seed = mix_seed(base_seed, static_cast<std::uint64_t>(k), 0);
        Environment env(gc, ec);
        const fs::path rho_path =
            fs::path(out_dir) / ("rho_series_" + mode + "_k" + k_str + ".csv");
        std::ofstream out(rho_path);
        out << "t,max_rho\n";
        if (env.reset(set)) {
          std::mt19937_64 greedy_rng(0);
          while (env.alive()) {
            int action = 0;
            if (mode == "agent")
              action = act(bundle, env.observation(), env.legal_mask(), true, greedy_rng).action;
            if (env.step(action).done) break;
          }
          for (const StepRecord& rec : env.trace()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", rec.info.max_rho);
            out << rec.t << "," << buf << "\n";
          }
        }
        written.push_back(rho_path.string());
      }
    }
  }

  for (const std::string& path : written) std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"power grid topology control: training and contingency screening"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> set_specs;
  std::optional<std::uint64_t> seed_flag;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--set", set_specs, "override config keys, e.g. env.opponent.tau_attack=5");
    sub->add_option("--seed", seed_flag, "master seed override");
  };

  int code = 0;

  auto* validate_cmd = app.add_subcommand("validate", "check a case file and its base power flow");
  std::string case_path;
  validate_cmd->add_option("case", case_path, "case JSON (default: bundled 14-bus case)");
  validate_cmd->callback([&] { code = cmd_validate(case_path); });

  auto* train_cmd = app.add_subcommand("train", "run the PPO curriculum");
  std::optional<long long> steps_flag;
  std::string from_path, out_path, log_path;
  add_common(train_cmd);
  train_cmd->add_option("--steps", steps_flag, "total env steps (40% general, 60% critical)");
  train_cmd->add_option("--from", from_path, "continue from an existing checkpoint");
  train_cmd->add_option("--out", out_path, "checkpoint output path");
  train_cmd->add_option("--log", log_path, "JSONL training log path");
  train_cmd->callback([&] {
    RunConfig cfg = load_config(config_path, set_specs, false);
    if (seed_flag) cfg.seed = *seed_flag;
    code = cmd_train(cfg, steps_flag, from_path, out_path.empty() ? cfg.checkpoint : out_path,
                     log_path.empty() ? cfg.train_log : log_path);
  });

  auto* screen_cmd = app.add_subcommand("screen", "exhaustive N-k contingency screening");
  std::string k_text, mode_text, checkpoint_flag, out_dir_flag;
  std::optional<int> jobs_flag;
  bool no_resume = false, progress = false;
  add_common(screen_cmd);
  screen_cmd->add_option("--k", k_text, "contingency orders, comma separated (e.g. 1,2,3)");
  screen_cmd->add_option("--mode", mode_text, "agent, no_agent, or both")
      ->check(CLI::IsMember({"agent", "no_agent", "both"}));
  screen_cmd->add_option("--checkpoint", checkpoint_flag, "trained policy bundle");
  screen_cmd->add_option("--jobs", jobs_flag, "worker count");
  screen_cmd->add_option("--out-dir", out_dir_flag, "output directory");
  screen_cmd->add_flag("--no-resume", no_resume, "recompute even if outputs exist");
  screen_cmd->add_flag("--progress", progress, "report progress to stderr");
  screen_cmd->callback([&] {
    RunConfig cfg = load_config(config_path, set_specs, true);
    if (seed_flag) cfg.seed = *seed_flag;
    ScreenSettings settings = cfg.screening;
    if (!k_text.empty()) settings.ks = parse_k_list(k_text);
    if (!mode_text.empty()) {
      settings.run_agent = mode_text != "no_agent";
      settings.run_no_agent = mode_text != "agent";
    }
    if (jobs_flag) settings.jobs = *jobs_flag;
    if (!out_dir_flag.empty()) settings.out_dir = out_dir_flag;
    if (no_resume) settings.resume = false;
    if (progress) settings.progress = true;
    code = cmd_screen(cfg, settings,
                      checkpoint_flag.empty() ? cfg.checkpoint : checkpoint_flag);
  });

  auto* report_cmd = app.add_subcommand("report", "plot-ready aggregates from a screening run");
  std::string run_dir, report_out;
  report_cmd->add_option("dir", run_dir, "screening output directory")->required();
  report_cmd->add_option("--out-dir", report_out, "where to write (default: run directory)");
  report_cmd->callback([&] { code = cmd_report(run_dir, report_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ExitError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return code;
}
