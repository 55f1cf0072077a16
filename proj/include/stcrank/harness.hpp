#pragma once

#include "stcrank/config.hpp"
#include "stcrank/metrics.hpp"
#include "stcrank/policy.hpp"
#include "stcrank/predictor.hpp"
#include "stcrank/tuner.hpp"
#include "stcrank/worldsim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stcrank {

struct ExperimentConfig {
  WorldConfig world;
  TrainConfig train;
  TuneSpec tune;
  ModelFormat model_format = ModelFormat::binary;
  int replicates = 1;
  std::uint64_t base_seed = 1;
  int log_days = 3;    // logging corpus used for training
  int valid_days = 1;  // held-out logging days used for tuning
  int eval_days = 3;
  bool common_random_numbers = true;
  bool persist_logs = false;  // write per-replicate session logs in experiments
  std::vector<ArmSpec> arms;
  Config source;

  /// Throws ConfigError for undeclared arms.
  const ArmSpec& arm(const std::string& name) const;
};

/// Reads [experiment], [train], [tune], [model] and every [arm.*] on top of
/// the world sections.
ExperimentConfig experiment_config_from(const Config& config);

/// Seed of replicate r.
std::uint64_t replicate_seed(const ExperimentConfig& config, int replicate, int seed_offset = 0);

/// World and logging corpus of one seed, shared by all arms.
struct Replicate {
  std::uint64_t seed = 0;
  World world;
  std::vector<SessionLog> train_logs;
  std::vector<SessionLog> valid_logs;
};

std::uint64_t world_seed(std::uint64_t seed);
std::uint64_t logging_run_seed(std::uint64_t seed);
std::uint64_t training_seed(std::uint64_t seed);
std::uint64_t eval_run_seed(std::uint64_t seed, const ArmSpec& arm, bool common_random_numbers);
std::uint64_t policy_seed(std::uint64_t seed);

Replicate make_replicate(const ExperimentConfig& config, std::uint64_t seed, int jobs = 1);

/// Logging corpus of an existing world: days 1..log_days+valid_days under
/// the random policy. Returns (train, valid).
std::pair<std::vector<SessionLog>, std::vector<SessionLog>> logging_corpus(
    const ExperimentConfig& config, const World& world, std::uint64_t seed, int jobs = 1);

struct ArmRun {
  ArmSpec arm;  // weights replaced by tuned ones when tuning ran
  std::optional<PredictorModel> model;
  std::optional<TuneResult> tune;
  std::vector<SessionLog> eval_logs;
  MetricReport report;
  std::vector<DecisionRecord> decisions;
};

PredictorModel train_arm(const ExperimentConfig& config, const Replicate& rep, const ArmSpec& arm);

ArmRun run_arm(const ExperimentConfig& config, const Replicate& rep, const ArmSpec& arm, int jobs = 1);

struct ExperimentResult {
  std::string arm_a;
  std::string arm_b;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> reports_a;
  std::vector<MetricReport> reports_b;
  LiftTable lift;
  std::vector<DecisionRecord> decisions_a;  // re-ranking decisions of arm A, all replicates
};

/// Runs both arms over the same replicates. Writes reports and the lift
/// table under `out_dir` when given.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::string& arm_a,
                                const std::string& arm_b,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                int jobs = 1, int seed_offset = 0);

struct HitrateSummary {
  std::vector<int> ks;  // the last entry is the full slate ("All")
  std::vector<double> mean;
  std::size_t decisions = 0;
};

HitrateSummary hitrate_summary(std::span<const DecisionRecord> decisions, std::vector<int> ks = {1, 3, 5});

nlohmann::json to_json(const HitrateSummary& h);
std::string format_hitrate(const HitrateSummary& h);

/// Staged pipeline over files in one output directory, for the replicate
/// selected by the seed offset. Each stage checks its inputs and throws
/// DependencyError naming the step that should have produced them.
struct Stages {
  const ExperimentConfig& config;
  std::filesystem::path out;
  int seed_offset = 0;
  int jobs = 1;

  std::filesystem::path arm_dir(const std::string& arm) const;

  void gen_world() const;
  void simulate() const;  // logging corpus
  void simulate_arm(const std::string& arm) const;
  void build_labels(const std::string& arm) const;
  void train(const std::string& arm) const;
  void tune(const std::string& arm) const;
  void rank(const std::string& arm) const;
  void rerank(const std::string& arm) const;
  void report() const;  // logging corpus tables
  void report_arm(const std::string& arm) const;
  void report_compare(const std::string& arm_a, const std::string& arm_b) const;

 private:
  World load_world() const;
  std::uint64_t seed() const;
  ArmSpec effective_arm(const std::string& arm) const;
  std::optional<PredictorModel> load_arm_model(const ArmSpec& arm) const;
};

}  // namespace stcrank
