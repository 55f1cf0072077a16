#include "stcrank/harness.hpp"

#include "stcrank/error.hpp"
#include "stcrank/jsonio.hpp"
#include "stcrank/labels.hpp"
#include "stcrank/rng.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace stcrank {

namespace fs = std::filesystem;

const ArmSpec& ExperimentConfig::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.name == name) return a;
  throw ConfigError("unknown arm '" + name + "'");
}

namespace {

void check_arm_name(const std::string& name) {
  if (name.empty() || !std::all_of(name.begin(), name.end(), [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
      }))
    throw ConfigError("arm name '" + name + "' may only use letters, digits, '_' and '-'");
}

std::vector<SessionLog> flatten(std::vector<DayResult>&& days) {
  std::vector<SessionLog> out;
  for (auto& d : days)
    for (auto& l : d.logs) out.push_back(std::move(l));
  return out;
}

}  // namespace

ExperimentConfig experiment_config_from(const Config& c) {
  ExperimentConfig e;
  e.world = world_config_from(c);
  validate(e.world);
  e.train = train_config_from(c, "train");
  e.tune = tune_spec_from(c, "tune");
  e.model_format = model_format_from(c.get_string("model/format", "binary"));
  e.replicates = static_cast<int>(c.get_int("experiment/replicates", e.replicates));
  e.base_seed = static_cast<std::uint64_t>(c.get_int("experiment/base_seed", static_cast<long long>(e.base_seed)));
  e.log_days = static_cast<int>(c.get_int("experiment/log_days", e.log_days));
  e.valid_days = static_cast<int>(c.get_int("experiment/valid_days", e.valid_days));
  e.eval_days = static_cast<int>(c.get_int("experiment/eval_days", e.eval_days));
  e.common_random_numbers = c.get_bool("experiment/common_random_numbers", e.common_random_numbers);
  e.persist_logs = c.get_bool("experiment/persist_logs", e.persist_logs);
  if (e.replicates < 1) throw ConfigError("experiment/replicates must be at least 1");
  if (e.log_days < 1 || e.eval_days < 1 || e.valid_days < 0)
    throw ConfigError("experiment day counts must be positive");
  for (const auto& name : declared_arms(c)) {
    check_arm_name(name);
    e.arms.push_back(arm_spec_from(c, name));
    if (e.arms.back().tune && e.valid_days < 1)
      throw ConfigError("arm '" + name + "' tunes weights but experiment/valid_days is 0");
  }
  e.source = c;
  return e;
}

std::uint64_t replicate_seed(const ExperimentConfig& c, int replicate, int seed_offset) {
  return c.base_seed + static_cast<std::uint64_t>(seed_offset) + static_cast<std::uint64_t>(replicate);
}

std::uint64_t world_seed(std::uint64_t seed) { return stream_key({seed, tag("world")}); }
std::uint64_t logging_run_seed(std::uint64_t seed) { return stream_key({seed, tag("logging")}); }
std::uint64_t training_seed(std::uint64_t seed) { return stream_key({seed, tag("train")}); }
std::uint64_t policy_seed(std::uint64_t seed) { return stream_key({seed, tag("policy")}); }

std::uint64_t eval_run_seed(std::uint64_t seed, const ArmSpec& arm, bool common_random_numbers) {
  if (common_random_numbers) return stream_key({seed, tag("eval")});
  return stream_key({seed, tag("eval"), tag(arm.name.c_str())});
}

std::pair<std::vector<SessionLog>, std::vector<SessionLog>> logging_corpus(const ExperimentConfig& c,
                                                                           const World& world,
                                                                           std::uint64_t seed, int jobs) {
  auto logs = flatten(simulate_days(world, random_policy(policy_seed(seed)), 1, c.log_days + c.valid_days,
                                    logging_run_seed(seed), jobs));
  std::vector<SessionLog> train, valid;
  for (auto& l : logs) (l.day <= c.log_days ? train : valid).push_back(std::move(l));
  return {std::move(train), std::move(valid)};
}

Replicate make_replicate(const ExperimentConfig& c, std::uint64_t seed, int jobs) {
  Replicate r;
  r.seed = seed;
  r.world = generate_world(c.world, world_seed(seed));
  std::tie(r.train_logs, r.valid_logs) = logging_corpus(c, r.world, seed, jobs);
  return r;
}

PredictorModel train_arm(const ExperimentConfig& c, const Replicate& rep, const ArmSpec& arm) {
  const auto samples = build_training_set(rep.world, rep.train_logs, arm.labels);
  return train(samples, c.train, training_seed(rep.seed));
}

ArmRun run_arm(const ExperimentConfig& c, const Replicate& rep, const ArmSpec& arm, int jobs) {
  ArmRun run;
  run.arm = arm;
  std::unique_ptr<Scorer> scorer;
  if (arm.oracle) {
    scorer = std::make_unique<OracleScorer>(rep.world, arm.labels.vtr_threshold.seconds());
  } else {
    run.model = train_arm(c, rep, arm);
    scorer = std::make_unique<ModelScorer>(rep.world, *run.model);
    if (arm.tune) {
      const auto validation = build_validation_set(rep.world, rep.valid_logs, *run.model, arm.labels);
      run.tune = tune(c.tune, validation, jobs);
      run.arm.weights = run.tune->best_weights;
      if (c.tune.tune_alpha) run.arm.alpha = run.tune->best_alpha;
    }
  }
  DecisionLog decisions;
  const auto policy = make_policy(*scorer, run.arm, policy_seed(rep.seed), &decisions);
  run.eval_logs = flatten(simulate_days(rep.world, policy, 1, c.eval_days,
                                        eval_run_seed(rep.seed, arm, c.common_random_numbers), jobs));
  run.report = session_metrics(run.eval_logs, rep.world);
  run.decisions = decisions.sorted();
  return run;
}

ExperimentResult run_experiment(const ExperimentConfig& c, const std::string& arm_a, const std::string& arm_b,
                                const std::optional<fs::path>& out_dir, int jobs, int seed_offset) {
  const ArmSpec& a = c.arm(arm_a);
  const ArmSpec& b = c.arm(arm_b);
  ExperimentResult result;
  result.arm_a = arm_a;
  result.arm_b = arm_b;
  const fs::path dir = out_dir ? *out_dir / "experiments" / (arm_a + "_vs_" + arm_b) : fs::path();
  std::vector<nlohmann::json> rows_a, rows_b;
  for (int r = 0; r < c.replicates; ++r) {
    const auto seed = replicate_seed(c, r, seed_offset);
    const auto rep = make_replicate(c, seed, jobs);
    auto run_a = run_arm(c, rep, a, jobs);
    auto run_b = arm_a == arm_b ? run_a : run_arm(c, rep, b, jobs);
    result.seeds.push_back(seed);
    result.reports_a.push_back(run_a.report);
    result.reports_b.push_back(run_b.report);
    result.decisions_a.insert(result.decisions_a.end(), run_a.decisions.begin(), run_a.decisions.end());
    if (out_dir) {
      auto ja = to_json(run_a.report), jb = to_json(run_b.report);
      ja["seed"] = seed;
      jb["seed"] = seed;
      rows_a.push_back(ja);
      rows_b.push_back(jb);
      if (c.persist_logs) {
        const fs::path sd = dir / fmt::format("seed_{}", seed);
        for (const auto* run : {&run_a, &run_b}) {
          save_logs(sd / run->arm.name / "logs.jsonl", run->eval_logs);
          if (run->model) save_model(*run->model, sd / run->arm.name / "model.bin", ModelFormat::binary);
        }
      }
    }
  }
  result.lift = compare(result.reports_a, result.reports_b);
  if (out_dir) {
    write_jsonl(dir / "reports_a.jsonl", rows_a);
    write_jsonl(dir / "reports_b.jsonl", rows_b);
    auto j = to_json(result.lift);
    j["arm_a"] = arm_a;
    j["arm_b"] = arm_b;
    j["seeds"] = result.seeds;
    write_json(dir / "lift.json", j);
    write_text(dir / "lift.txt", fmt::format("A = {}, B = {}, {} paired replicates\n\n{}", arm_a, arm_b,
                                             result.seeds.size(), format_lift(result.lift)));
  }
  return result;
}

HitrateSummary hitrate_summary(std::span<const DecisionRecord> decisions, std::vector<int> ks) {
  HitrateSummary h;
  h.decisions = decisions.size();
  if (decisions.empty()) throw InputError("hitrate summary needs at least one decision");
  const int slate = static_cast<int>(decisions.front().reranked.size());
  std::erase_if(ks, [&](int k) { return k < 1 || k >= slate; });
  ks.push_back(slate);
  h.ks = ks;
  h.mean.assign(ks.size(), 0.0);
  for (const auto& d : decisions) {
    if (static_cast<int>(d.reranked.size()) != slate || d.pointwise.size() != d.reranked.size())
      throw InputError("hitrate summary needs equal slate lengths");
    for (std::size_t i = 0; i < ks.size(); ++i) h.mean[i] += hitrate_at_k(d.reranked, d.pointwise, ks[i]);
  }
  for (auto& m : h.mean) m /= static_cast<double>(decisions.size());
  return h;
}

nlohmann::json to_json(const HitrateSummary& h) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < h.ks.size(); ++i)
    rows.push_back({{"k", i + 1 == h.ks.size() ? nlohmann::json("all") : nlohmann::json(h.ks[i])},
                    {"size", h.ks[i]},
                    {"hitrate", h.mean[i]}});
  return {{"v", 1}, {"decisions", h.decisions}, {"rows", rows}};
}

std::string format_hitrate(const HitrateSummary& h) {
  std::string out = fmt::format("{:<12}{:>10}\n", "K", "hitrate");
  for (std::size_t i = 0; i < h.ks.size(); ++i) {
    const std::string k = i + 1 == h.ks.size() ? fmt::format("All ({})", h.ks[i]) : std::to_string(h.ks[i]);
    out += fmt::format("{:<12}{:>9.1f}%\n", k, 100.0 * h.mean[i]);
  }
  out += fmt::format("decisions: {}\n", h.decisions);
  return out;
}

// ---- staged pipeline ----

fs::path Stages::arm_dir(const std::string& arm) const {
  config.arm(arm);
  return out / "arms" / arm;
}

std::uint64_t Stages::seed() const { return replicate_seed(config, 0, seed_offset); }

World Stages::load_world() const {
  const auto path = out / "world.json";
  require_artifact(path, "gen-world");
  return world_from_json(read_json(path));
}

void Stages::gen_world() const {
  write_json(out / "world.json", to_json(generate_world(config.world, world_seed(seed()))));
}

void Stages::simulate() const {
  const auto world = load_world();
  auto [train, valid] = logging_corpus(config, world, seed(), jobs);
  train.insert(train.end(), valid.begin(), valid.end());
  save_logs(out / "logs.jsonl", train);
}

namespace {

std::vector<SessionLog> logging_logs(const fs::path& out, const ExperimentConfig& c, bool validation) {
  const auto path = out / "logs.jsonl";
  require_artifact(path, "simulate");
  std::vector<SessionLog> keep;
  for (auto& l : load_logs(path))
    if ((l.day > c.log_days) == validation) keep.push_back(std::move(l));
  if (keep.empty())
    throw InputError(std::string("logging corpus has no ") + (validation ? "validation" : "training") + " days");
  return keep;
}

fs::path model_path(const fs::path& dir, ModelFormat f) {
  return dir / (f == ModelFormat::binary ? "model.bin" : "model.json");
}

}  // namespace

void Stages::build_labels(const std::string& arm) const {
  const auto spec = config.arm(arm);
  const auto world = load_world();
  const auto logs = logging_logs(out, config, false);
  save_samples(arm_dir(arm) / "samples.jsonl", build_training_set(world, logs, spec.labels));
}

void Stages::train(const std::string& arm) const {
  const auto path = arm_dir(arm) / "samples.jsonl";
  require_artifact(path, "build-labels");
  const auto samples = load_samples(path);
  std::vector<EpochMetric> metrics;
  const auto model = stcrank::train(samples, config.train, training_seed(seed()), &metrics);
  save_model(model, model_path(arm_dir(arm), config.model_format), config.model_format);
  std::vector<nlohmann::json> rows;
  for (const auto& m : metrics)
    rows.push_back({{"v", 1}, {"obj", name(m.objective)}, {"epoch", m.epoch}, {"loss", m.mean_loss},
                    {"samples", m.samples}});
  write_jsonl(arm_dir(arm) / "train_metrics.jsonl", rows);
}

std::optional<PredictorModel> Stages::load_arm_model(const ArmSpec& arm) const {
  if (arm.oracle) return std::nullopt;
  const auto path = model_path(arm_dir(arm.name), config.model_format);
  require_artifact(path, "train");
  return load_model(path);
}

void Stages::tune(const std::string& arm) const {
  const auto spec = config.arm(arm);
  if (spec.oracle) throw ConfigError("arm '" + arm + "' serves the oracle and has nothing to tune");
  const auto world = load_world();
  const auto model = load_arm_model(spec);
  const auto logs = logging_logs(out, config, true);
  const auto validation = build_validation_set(world, logs, *model, spec.labels);
  const auto result = stcrank::tune(config.tune, validation, jobs);
  std::vector<nlohmann::json> trace;
  for (const auto& p : result.trace) trace.push_back(to_json(p));
  write_jsonl(arm_dir(arm) / "tune_trace.jsonl", trace);
  write_json(arm_dir(arm) / "tune.json", to_json(result));
}

ArmSpec Stages::effective_arm(const std::string& arm) const {
  ArmSpec spec = config.arm(arm);
  if (spec.tune && !spec.oracle) {
    const auto path = arm_dir(arm) / "tune.json";
    require_artifact(path, "tune");
    const auto j = read_json(path);
    spec.weights = {j.at("w_vtr").get<double>(), j.at("w_cvr").get<double>(), j.at("w_sdr").get<double>()};
    if (config.tune.tune_alpha) spec.alpha = j.at("alpha").get<double>();
  }
  return spec;
}

namespace {

struct Serving {
  std::optional<PredictorModel> model;
  std::unique_ptr<Scorer> scorer;
};

Serving serving_for(const World& world, const ArmSpec& arm, std::optional<PredictorModel> model) {
  Serving s;
  s.model = std::move(model);
  if (arm.oracle)
    s.scorer = std::make_unique<OracleScorer>(world, arm.labels.vtr_threshold.seconds());
  else
    s.scorer = std::make_unique<ModelScorer>(world, *s.model);
  return s;
}

// First-page F-stage requests replayed from the validation days of the logging corpus.
std::vector<DecisionRecord> replay_requests(const World& world, std::span<const SessionLog> logs,
                                            const PolicyBundle& policy, std::uint64_t logging_seed) {
  std::vector<DecisionRecord> out;
  for (const auto& l : logs) {
    if (!l.estage.entered_fstage) continue;
    const SessionKey key{logging_seed, l.user_id, l.day, l.session_index};
    const auto candidates = retrieve_fstage_candidates(world, l.trigger_item_id, key);
    const FStageRequest req{l.user_id, l.day, l.session_index, l.trigger_item_id, 0,
                            world.session.slate_size, candidates, {}};
    DecisionRecord r{l.user_id, l.day, l.session_index, 0, policy.fstage(req), {}};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void Stages::rank(const std::string& arm) const {
  ArmSpec spec = effective_arm(arm);
  spec.fstage = FStagePolicy::pointwise;
  const auto world = load_world();
  const auto serving = serving_for(world, spec, load_arm_model(spec));
  const auto logs = logging_logs(out, config, true);
  const auto policy = make_policy(*serving.scorer, spec, policy_seed(seed()));
  std::vector<nlohmann::json> rows;
  for (const auto& r : replay_requests(world, logs, policy, logging_run_seed(seed())))
    rows.push_back({{"v", 1}, {"user", r.user_id}, {"day", r.day}, {"session", r.session_index},
                    {"pointwise", r.pointwise}});
  write_jsonl(arm_dir(arm) / "rank.jsonl", rows);
}

void Stages::rerank(const std::string& arm) const {
  ArmSpec spec = effective_arm(arm);
  spec.fstage = FStagePolicy::beam;
  const auto rank_path = arm_dir(arm) / "rank.jsonl";
  require_artifact(rank_path, "rank");
  const auto ranked = read_jsonl(rank_path);
  const auto world = load_world();
  const auto serving = serving_for(world, spec, load_arm_model(spec));
  const auto logs = logging_logs(out, config, true);
  DecisionLog log;
  const auto policy = make_policy(*serving.scorer, spec, policy_seed(seed()), &log);
  replay_requests(world, logs, policy, logging_run_seed(seed()));
  auto decisions = log.sorted();
  if (decisions.size() != ranked.size())
    throw InputError("rank.jsonl does not match the replayed requests; rerun rank");
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    // Compare against the persisted point-wise stage output.
    decisions[i].pointwise = ranked[i].at("pointwise").get<std::vector<int>>();
    rows.push_back(to_json(decisions[i]));
  }
  write_jsonl(arm_dir(arm) / "rerank.jsonl", rows);
  const auto h = hitrate_summary(decisions);
  write_json(arm_dir(arm) / "hitrate.json", to_json(h));
  write_text(arm_dir(arm) / "hitrate.txt", format_hitrate(h));
}

void Stages::simulate_arm(const std::string& arm) const {
  const ArmSpec spec = effective_arm(arm);
  const auto world = load_world();
  const auto serving = serving_for(world, spec, load_arm_model(spec));
  DecisionLog log;
  const auto policy = make_policy(*serving.scorer, spec, policy_seed(seed()), &log);
  const auto logs = flatten(simulate_days(world, policy, 1, config.eval_days,
                                          eval_run_seed(seed(), spec, config.common_random_numbers), jobs));
  save_logs(arm_dir(arm) / "eval_logs.jsonl", logs);
  std::vector<nlohmann::json> rows;
  for (const auto& d : log.sorted()) rows.push_back(to_json(d));
  write_jsonl(arm_dir(arm) / "decisions.jsonl", rows);
}

void Stages::report() const {
  const auto world = load_world();
  const auto path = out / "logs.jsonl";
  require_artifact(path, "simulate");
  const auto logs = load_logs(path);
  const auto r = session_metrics(logs, world);
  const auto slots = exposed_slots(logs);
  const auto buckets = bucketed_spearman(slots);
  const auto exits = exit_probability_table(logs);
  const auto exits_first = exit_probability_table(logs, true);
  write_json(out / "report.json", {{"v", 1},
                                   {"metrics", to_json(r)},
                                   {"spearman_by_view_time", to_json(buckets)},
                                   {"exit_probability", to_json(exits)},
                                   {"exit_probability_first_slot", to_json(exits_first)}});
  write_text(out / "report.txt", "Logging corpus\n\n" + format_report(r) +
                                     "\nSpearman rho(conversion, view time) by bucket\n" +
                                     format_buckets(buckets) + "\nExit probability (all exposed slots)\n" +
                                     format_exit_table(exits) + "\nExit probability (first slot only)\n" +
                                     format_exit_table(exits_first));
}

namespace {

std::vector<SessionLog> arm_eval_logs(const fs::path& dir) {
  const auto path = dir / "eval_logs.jsonl";
  require_artifact(path, "simulate --arm");
  return load_logs(path);
}

}  // namespace

void Stages::report_arm(const std::string& arm) const {
  const auto world = load_world();
  const auto r = session_metrics(arm_eval_logs(arm_dir(arm)), world);
  write_json(arm_dir(arm) / "report.json", to_json(r));
  write_text(arm_dir(arm) / "report.txt", "Arm " + arm + "\n\n" + format_report(r));
}

void Stages::report_compare(const std::string& arm_a, const std::string& arm_b) const {
  const auto world = load_world();
  const auto a = session_metrics(arm_eval_logs(arm_dir(arm_a)), world);
  const auto b = session_metrics(arm_eval_logs(arm_dir(arm_b)), world);
  const auto lift = compare(a, b);
  auto j = to_json(lift);
  j["arm_a"] = arm_a;
  j["arm_b"] = arm_b;
  const auto stem = "compare_" + arm_a + "_vs_" + arm_b;
  write_json(out / (stem + ".json"), j);
  write_text(out / (stem + ".txt"),
             fmt::format("A = {}, B = {}, single replicate\n\n{}", arm_a, arm_b, format_lift(lift)));
}

}  // namespace stcrank
