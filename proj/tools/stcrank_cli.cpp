// Command-line front end for the staged pipeline and paired experiments.

#include "stcrank/error.hpp"
#include "stcrank/harness.hpp"
#include "stcrank/jsonio.hpp"
#include "stcrank/oracle_suites.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitOracle = 4;

struct Options {
  std::string config;
  std::string out = "out";
  int seed_offset = 0;
  int jobs = 1;
  std::vector<std::string> arms;
};

stcrank::ExperimentConfig load_config(const Options& o) {
  if (o.config.empty()) throw stcrank::ConfigError("--config is required for this subcommand");
  return stcrank::experiment_config_from(stcrank::Config::from_file(o.config));
}

std::vector<std::string> arms_or_all(const Options& o, const stcrank::ExperimentConfig& c) {
  if (!o.arms.empty()) return o.arms;
  std::vector<std::string> all;
  for (const auto& a : c.arms) all.push_back(a.name);
  if (all.empty()) throw stcrank::ConfigError("config declares no [arm.*] sections");
  return all;
}

int oracle_check() {
  bool ok = true;
  for (const auto& r : stcrank::run_oracle_suites()) {
    fmt::print("{} {}: {}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitOracle;
}

int run(const std::string& command, const Options& o) {
  if (command == "oracle-check") return oracle_check();
  const auto config = load_config(o);
  const stcrank::Stages stages{config, o.out, o.seed_offset, o.jobs};
  if (command == "gen-world") {
    stages.gen_world();
  } else if (command == "simulate") {
    if (o.arms.empty()) stages.simulate();
    for (const auto& a : o.arms) stages.simulate_arm(a);
  } else if (command == "build-labels") {
    for (const auto& a : arms_or_all(o, config)) stages.build_labels(a);
  } else if (command == "train") {
    for (const auto& a : arms_or_all(o, config)) stages.train(a);
  } else if (command == "tune") {
    for (const auto& a : arms_or_all(o, config)) stages.tune(a);
  } else if (command == "rank") {
    for (const auto& a : arms_or_all(o, config)) stages.rank(a);
  } else if (command == "rerank") {
    for (const auto& a : arms_or_all(o, config)) stages.rerank(a);
  } else if (command == "report") {
    if (o.arms.empty()) {
      stages.report();
      std::cout << stcrank::read_text(std::filesystem::path(o.out) / "report.txt");
    } else if (o.arms.size() == 1) {
      stages.report_arm(o.arms[0]);
      std::cout << stcrank::read_text(stages.arm_dir(o.arms[0]) / "report.txt");
    } else if (o.arms.size() == 2) {
      stages.report_compare(o.arms[0], o.arms[1]);
      std::cout << stcrank::read_text(std::filesystem::path(o.out) /
                                      ("compare_" + o.arms[0] + "_vs_" + o.arms[1] + ".txt"));
    } else {
      throw stcrank::ConfigError("report takes at most two --arm flags");
    }
  } else if (command == "experiment") {
    if (o.arms.size() != 2) throw stcrank::ConfigError("experiment needs exactly two --arm flags (A then B)");
    const auto result = stcrank::run_experiment(config, o.arms[0], o.arms[1], std::filesystem::path(o.out),
                                                o.jobs, o.seed_offset);
    std::cout << stcrank::read_text(std::filesystem::path(o.out) / "experiments" /
                                    (o.arms[0] + "_vs_" + o.arms[1]) / "lift.txt");
    (void)result;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated two-stage ranking: world generation, labels, training, tuning, re-ranking, reports"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("--config", o.config, "experiment config file (TOML-style)");
  app.add_option("--out", o.out, "artifact directory")->capture_default_str();
  app.add_option("--seed-offset", o.seed_offset, "added to experiment/base_seed")->capture_default_str();
  app.add_option("--jobs", o.jobs, "worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--arm", o.arms, "arm name from an [arm.NAME] section; repeatable");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-world", "generate the synthetic world (world.json)"},
      {"simulate", "simulate the logging corpus, or an arm's evaluation days with --arm"},
      {"build-labels", "build training samples per arm"},
      {"train", "train per-objective logistic heads per arm"},
      {"tune", "search ensemble weights on the validation days"},
      {"rank", "point-wise slates for replayed F-stage requests"},
      {"rerank", "beam-search slates and hit rates against the point-wise stage"},
      {"report", "metric tables for the corpus, one arm, or two arms"},
      {"oracle-check", "run every brute-force oracle suite"},
      {"experiment", "paired replicate experiment: --arm A --arm B"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const stcrank::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const stcrank::DependencyError& e) {
    fmt::print(stderr, "dependency error: {}\n", e.what());
    return kExitDependency;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitOther;
  }
}
