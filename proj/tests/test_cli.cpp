#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <gridrl/run_config.hpp>

using namespace gridrl;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& name) : dir(fs::path("cli_work") / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  RunResult run(const std::string& args) const {
    const fs::path out = dir / "last_output.txt";
    const std::string cmd = "cd " + dir.string() + " && " + GRIDRL_BIN_PATH + " " + args +
                            " > last_output.txt 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
  }

  fs::path path(const std::string& rel) const { return dir / rel; }

  std::string slurp(const std::string& rel) const {
    std::ifstream in(path(rel));
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& rel, const std::string& text) const {
    std::ofstream out(path(rel));
    out << text;
  }
};

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("config schema lists every run option") {
  const json schema = config_schema();
  for (const char* key : {"case_path", "seed", "ppo_raw_table", "checkpoint", "train_log",
                          "env", "ppo", "schedule", "screening"})
    REQUIRE(schema.contains(key));
  REQUIRE(schema.at("env").contains("opponent"));
  REQUIRE(schema.at("env").at("opponent").contains("tau_attack"));
  REQUIRE(schema.at("ppo").at("critical").contains("learning_rate"));
}

TEST_CASE("config tree validation rejects unknown keys with their path") {
  const json schema = config_schema();
  REQUIRE_NOTHROW(validate_config_tree(json::parse(R"({"env":{"episode_limit":50}})"), schema));
  REQUIRE_THROWS_AS(validate_config_tree(json::parse(R"({"episodes":3})"), schema), ConfigError);
  try {
    validate_config_tree(json::parse(R"({"env":{"opponent":{"tau":5}}})"), schema);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("env.opponent.tau") != std::string::npos);
  }
}

TEST_CASE("override patches parse typed values and refuse bad paths") {
  const json schema = config_schema();

  json patch = override_patch("env.opponent.tau_attack=5", schema);
  REQUIRE(patch == json::parse(R"({"env":{"opponent":{"tau_attack":5}}})"));
  REQUIRE(patch.at("env").at("opponent").at("tau_attack").is_number_integer());

  patch = override_patch("ppo.general.learning_rate=0.003", schema);
  REQUIRE(patch.at("ppo").at("general").at("learning_rate").get<double>() == 0.003);

  patch = override_patch("env.opponent.enabled=false", schema);
  REQUIRE(patch.at("env").at("opponent").at("enabled").is_boolean());

  patch = override_patch("checkpoint=run/final.json", schema);
  REQUIRE(patch.at("checkpoint").get<std::string>() == "run/final.json");

  REQUIRE_THROWS_AS(override_patch("seed", schema), ConfigError);
  REQUIRE_THROWS_AS(override_patch("nope=1", schema), ConfigError);
  REQUIRE_THROWS_AS(override_patch("env.nope=1", schema), ConfigError);
  REQUIRE_THROWS_AS(override_patch("env=1", schema), ConfigError);
  REQUIRE_THROWS_AS(override_patch("=5", schema), ConfigError);
}

TEST_CASE("config resolution layers file over defaults") {
  RunConfig cfg = resolve_config(json::object());
  const RunConfig defaults;
  REQUIRE(cfg.seed == defaults.seed);
  REQUIRE(cfg.env.episode_limit == defaults.env.episode_limit);
  REQUIRE(cfg.ppo.general.learning_rate == defaults.ppo.general.learning_rate);

  json tree = json::parse(R"({"seed": 99, "env": {"episode_limit": 250}})");
  cfg = resolve_config(tree);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.env.episode_limit == 250);
  REQUIRE(cfg.env.rho_threshold == defaults.env.rho_threshold);
  REQUIRE(cfg.checkpoint == defaults.checkpoint);

  tree.merge_patch(override_patch("env.episode_limit=40", config_schema()));
  cfg = resolve_config(tree);
  REQUIRE(cfg.env.episode_limit == 40);
  REQUIRE(cfg.seed == 99);
}

TEST_CASE("raw hyperparameter table flips per policy") {
  json tree = json::parse(R"({"ppo_raw_table": true})");
  const RunConfig cfg = resolve_config(tree);
  const PpoConfig raw = raw_table_config();
  REQUIRE(cfg.ppo.general.learning_rate == raw.general.learning_rate);
  REQUIRE(cfg.ppo.general.entropy_coef == raw.general.entropy_coef);
  REQUIRE(cfg.ppo.general.discount == raw.general.discount);
  REQUIRE(cfg.ppo.critical.learning_rate == raw.critical.learning_rate);
  REQUIRE(cfg.ppo.critical.entropy_coef == raw.critical.entropy_coef);
  REQUIRE(cfg.ppo.critical.discount == raw.critical.discount);

  tree["ppo"] = {{"clip_epsilon", 0.3}};
  const RunConfig layered = resolve_config(tree);
  REQUIRE(layered.ppo.clip_epsilon == 0.3);
  REQUIRE(layered.ppo.general.entropy_coef == raw.general.entropy_coef);
}

TEST_CASE("run config survives a json round trip") {
  RunConfig cfg;
  cfg.seed = 77;
  cfg.env.opponent.tau_attack = 4;
  cfg.ppo.minibatch_size = 32;
  cfg.screening.ks = {2, 4};
  const json j = cfg;
  RunConfig back;
  j.get_to(back);
  REQUIRE(json(back) == j);
}

TEST_CASE("validate reports the bundled case") {
  const Workspace ws("validate_ok");
  const RunResult r = ws.run("validate");
  REQUIRE(r.code == 0);
  REQUIRE(r.output.find("14 buses") != std::string::npos);
  REQUIRE(r.output.find("20 lines") != std::string::npos);
  REQUIRE(r.output.find("6 generators") != std::string::npos);
  REQUIRE(r.output.find("converged") != std::string::npos);
}

TEST_CASE("validate distinguishes missing files from broken ones") {
  const Workspace ws("validate_bad");
  REQUIRE(ws.run("validate does_not_exist.json").code == 4);

  ws.write("broken.json", "{ not json");
  REQUIRE(ws.run("validate broken.json").code == 2);

  ws.write("empty.json", "{}");
  REQUIRE(ws.run("validate empty.json").code == 2);
}

TEST_CASE("train writes a loadable checkpoint and a config-led log") {
  const Workspace ws("train_smoke");
  const RunResult r = ws.run("train --steps 0 --seed 3 --out ckpt.json --log log.jsonl");
  REQUIRE(r.code == 0);

  const DualPolicyBundle bundle = load_bundle(ws.path("ckpt.json").string());
  REQUIRE(bundle.general_arch.actions == 55);
  REQUIRE(bundle.critical_arch.mlp_hidden1 == 512);

  std::ifstream log(ws.path("log.jsonl"));
  std::string first;
  REQUIRE(std::getline(log, first));
  const json event = json::parse(first);
  REQUIRE(event.at("event") == "config");
  REQUIRE(event.at("config").at("seed") == 3);
}

TEST_CASE("train runs are seed deterministic end to end") {
  const Workspace a("train_det_a");
  const Workspace b("train_det_b");
  const std::string args = "train --steps 400 --seed 11 --out ckpt.json --log log.jsonl";
  REQUIRE(a.run(args).code == 0);
  REQUIRE(b.run(args).code == 0);
  REQUIRE(a.slurp("log.jsonl") == b.slurp("log.jsonl"));
  REQUIRE(a.slurp("ckpt.json") == b.slurp("ckpt.json"));
}

TEST_CASE("screen produces tables, files, and honors overrides") {
  const Workspace ws("screen_smoke");
  REQUIRE(ws.run("train --steps 0 --seed 3 --out ckpt.json --log log.jsonl").code == 0);

  const RunResult r = ws.run(
      "screen --k 1 --mode both --checkpoint ckpt.json --out-dir scr --seed 21 "
      "--set env.opponent.tau_attack=3");
  REQUIRE(r.code == 0);
  REQUIRE(r.output.find("no_agent") != std::string::npos);
  REQUIRE(r.output.find("agent") != std::string::npos);

  const std::string csv = ws.slurp("scr/screening_no_agent.csv");
  REQUIRE(count_lines(csv) == 21);
  REQUIRE(csv.rfind("k,set,steps_survived,cum_reward,total_cascades,failure_cause", 0) == 0);

  const json summary = json::parse(ws.slurp("scr/summary.json"));
  REQUIRE(summary.at("base_seed") == 21);
  REQUIRE(summary.at("modes").at("no_agent").at("1").at("sets") == 20);
  REQUIRE(summary.at("modes").contains("agent"));
  REQUIRE(summary.at("config").at("env").at("opponent").at("tau_attack") == 3);
}

TEST_CASE("screen rejects bad inputs with distinct codes") {
  const Workspace ws("screen_bad");
  REQUIRE(ws.run("screen --k 1 --mode no_agent --set bogus.key=1").code == 1);
  REQUIRE(ws.run("screen --k 1 --mode agent --checkpoint missing.json").code == 2);
  REQUIRE(ws.run("screen --k x --mode no_agent").code == 1);

  ws.write("broken.json", "{ nope");
  REQUIRE(ws.run("screen --config broken.json --k 1 --mode no_agent").code == 2);

  ws.write("unknown.json", R"({"environment": {}})");
  REQUIRE(ws.run("screen --config unknown.json --k 1 --mode no_agent").code == 2);
}

TEST_CASE("report turns a screening run into plot-ready tables") {
  const Workspace ws("report_smoke");
  REQUIRE(ws.run("train --steps 0 --seed 3 --out ckpt.json --log log.jsonl").code == 0);
  REQUIRE(ws.run("screen --k 1 --mode both --checkpoint ckpt.json --out-dir scr --seed 9")
              .code == 0);

  const RunResult r = ws.run("report scr");
  REQUIRE(r.code == 0);

  const std::string survival = ws.slurp("scr/survival_no_agent.csv");
  REQUIRE(count_lines(survival) == 21);
  REQUIRE(survival.rfind("k,set,steps_survived", 0) == 0);

  const std::string curve = ws.slurp("scr/cascade_curve_no_agent_k1.csv");
  REQUIRE(count_lines(curve) == 101);

  std::stringstream cmp(ws.slurp("scr/comparison.csv"));
  std::string line;
  std::getline(cmp, line);
  REQUIRE(line == "k,set,steps_no_agent,steps_agent,gap");
  int prev_gap = std::numeric_limits<int>::max();
  int rows = 0;
  while (std::getline(cmp, line)) {
    const int gap = std::stoi(line.substr(line.rfind(',') + 1));
    REQUIRE(gap <= prev_gap);
    prev_gap = gap;
    ++rows;
  }
  REQUIRE(rows == 20);

  REQUIRE(fs::exists(ws.path("scr/rho_series_no_agent_k1.csv")));
  REQUIRE(fs::exists(ws.path("scr/rho_series_agent_k1.csv")));
}

TEST_CASE("report refuses a directory without screening outputs") {
  const Workspace ws("report_empty");
  fs::create_directories(ws.path("nothing"));
  REQUIRE(ws.run("report nothing").code == 1);
}
