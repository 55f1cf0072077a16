// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion and exits
// with 4 if any criterion fails.

#include "stcrank/error.hpp"
#include "stcrank/harness.hpp"
#include "stcrank/jsonio.hpp"
#include "stcrank/metrics.hpp"
#include "stcrank/oracle_suites.hpp"
#include "stcrank/reranker.hpp"
#include "stcrank/tuner.hpp"

#include <CLI11.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

using namespace stcrank;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kOracleSeed = 20240601;
constexpr double kAlpha = 0.05;

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Context {
  fs::path config_dir;
  int replicates = 0;  // 0 keeps the config value
  int jobs = 1;
  Clock::time_point start = Clock::now();

  ExperimentConfig load(const std::string& file, const std::string& overlay = "") const {
    auto c = Config::from_file(config_dir / file);
    if (!overlay.empty()) c = c.merged(Config::from_string(overlay));
    auto e = experiment_config_from(c);
    if (replicates > 0) e.replicates = replicates;
    return e;
  }
};

// Metric reports of several arms over the same replicates. Arms with equal
// specs (ignoring the name) are simulated once.
class ArmReports {
 public:
  ArmReports(const ExperimentConfig& config, const std::vector<std::string>& arms, int jobs) {
    std::map<std::string, std::string> canonical;  // spec text -> first arm name
    std::vector<std::string> unique;
    for (const auto& a : arms) {
      auto j = to_json(config.arm(a));
      j.erase("name");
      auto [it, fresh] = canonical.emplace(j.dump(), a);
      alias_[a] = it->second;
      if (fresh) unique.push_back(a);
    }
    for (int r = 0; r < config.replicates; ++r) {
      const auto rep = make_replicate(config, replicate_seed(config, r), jobs);
      for (const auto& a : unique) {
        auto run = run_arm(config, rep, config.arm(a), jobs);
        reports_[a].push_back(run.report);
        auto& d = decisions_[a];
        d.push_back(std::move(run.decisions));
      }
    }
  }

  const std::vector<MetricReport>& reports(const std::string& arm) const { return reports_.at(alias_.at(arm)); }
  const std::vector<std::vector<DecisionRecord>>& decisions(const std::string& arm) const {
    return decisions_.at(alias_.at(arm));
  }
  LiftTable lift(const std::string& a, const std::string& b) const { return compare(reports(a), reports(b)); }

 private:
  std::map<std::string, std::string> alias_;
  std::map<std::string, std::vector<MetricReport>> reports_;
  std::map<std::string, std::vector<std::vector<DecisionRecord>>> decisions_;
};

std::string pct(const std::optional<double>& v) { return v ? fmt::format("{:+.2f}%", 100 * *v) : "n/a"; }

std::string lift_text(const LiftRow& r) {
  return fmt::format("{} {} (p(A>B)={:.4f})", r.metric, pct(r.lift), r.p_one_sided);
}

Outcome criterion1(const Context&) {
  const auto t = Clock::now();
  const auto r = beam_matches_brute_force(kOracleSeed, 500);
  const double s = seconds_since(t);
  return {r.passed && s < 120.0, fmt::format("{}; {:.1f}s (limit 120s)", r.detail, s)};
}

Outcome criterion2(const Context&) {
  const auto r = beam_quality(kOracleSeed, 25, 8, 4, 500, kBeamQualityFloor);
  return {r.passed, r.detail};
}

Outcome criterion3(const Context& ctx) {
  // Witness: one trap item that ends the session but has the largest value.
  const EnsembleWeights w{1.0, 1.0, 1.0};
  std::vector<ScoredCandidate> c = {{1, ObjectiveScores(0.51, 0.5, 0.0), 0, 0},
                                    {2, ObjectiveScores(0.0, 0.0, 1.0), 0, 0},
                                    {3, ObjectiveScores(0.0, 0.0, 1.0), 0, 0}};
  std::vector<int> greedy;
  for (const auto& x : rank_pointwise(c, w, 3)) greedy.push_back(x.item_id);
  const double greedy_value = sequence_value(greedy, c, w).sequence_value;
  const auto best = beam_search(c, {25, 3}, w);
  std::set<int> s1(greedy.begin(), greedy.end()), s2(best.permutation.begin(), best.permutation.end());
  const bool witness = s1 == s2 && greedy_value < best.sequence_value;

  const auto cfg = ctx.load("greedy_trap.ini");
  const ArmReports runs(cfg, {"msc_on", "msc_off"}, ctx.jobs);
  const auto row = runs.lift("msc_on", "msc_off").row("purchases");
  const bool sim = row.lift && *row.lift > 0 && row.p_one_sided < kAlpha;
  return {witness && sim,
          fmt::format("witness point-wise {} = {:.2f} < re-ranked {} = {:.2f}; MSC-on vs MSC-off over {} seeds: {}",
                      fmt::join(greedy, ","), greedy_value, fmt::join(best.permutation, ","), best.sequence_value,
                      cfg.replicates, lift_text(row))};
}

struct CorpusTables {
  std::vector<BucketCorrelation> buckets;
  ExitProbabilityTable exits;
  std::size_t slots = 0;
};

CorpusTables corpus_tables(const Context& ctx) {
  static std::optional<CorpusTables> cached;
  if (cached) return *cached;
  const auto cfg = ctx.load("calibration.ini");
  const auto min_slots = static_cast<std::size_t>(cfg.source.get_int("acceptance/spearman_min_slots", 1000000));
  CorpusTables t;
  std::vector<SlotOutcome> slots;
  std::vector<SessionLog> sessions;
  for (int r = 0; slots.size() < min_slots; ++r) {
    const auto seed = replicate_seed(cfg, r);
    const auto world = generate_world(cfg.world, world_seed(seed));
    auto [train, valid] = logging_corpus(cfg, world, seed, ctx.jobs);
    for (auto* part : {&train, &valid}) {
      for (auto& l : *part) {
        for (const auto& s : l.fstage_slots)
          if (s.exposed) slots.push_back(s);
        l.estage.impressions.clear();
        sessions.push_back(std::move(l));
      }
    }
  }
  t.slots = slots.size();
  t.buckets = bucketed_spearman(slots);
  t.exits = exit_probability_table(sessions);
  cached = t;
  return t;
}

Outcome criterion4(const Context& ctx) {
  const auto t = corpus_tables(ctx);
  bool ok = t.slots >= 1000000;
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < t.buckets.size(); ++i) {
    const auto& b = t.buckets[i];
    ok = ok && b.rho.has_value();
    if (ok && i > 0) ok = *b.rho > *t.buckets[i - 1].rho;
    parts.push_back(b.rho ? fmt::format("{:.4f}", *b.rho) : "undefined");
  }
  return {ok, fmt::format("{} slots; rho by bucket 0-2s, 2-5s, 5-25s, >25s: {}", t.slots, fmt::join(parts, " < "))};
}

Outcome criterion5(const Context& ctx) {
  const auto t = corpus_tables(ctx);
  const double margin = ctx.load("calibration.ini").source.get_double("acceptance/exit_margin", 0.2);
  const auto& p = t.exits.probability;
  bool ok = p[0][1] - p[0][0] >= margin;
  for (int c = 0; c < 2; ++c) ok = ok && p[0][c] <= p[1][c] && p[1][c] <= p[2][c];
  return {ok, fmt::format("no conversion {:.1f}% / {:.1f}% / {:.1f}%, conversion {:.1f}% / {:.1f}% / {:.1f}% "
                          "(immediate / within 3 / within 5); immediate gap {:.1f} points, margin {:.0f}",
                          100 * p[0][0], 100 * p[1][0], 100 * p[2][0], 100 * p[0][1], 100 * p[1][1],
                          100 * p[2][1], 100 * (p[0][1] - p[0][0]), 100 * margin)};
}

const ArmReports& calibration_runs(const Context& ctx) {
  static std::optional<ArmReports> runs;
  if (!runs)
    runs.emplace(ctx.load("calibration.ini"),
                 std::vector<std::string>{"vtr2", "vtr5", "vtr25", "no_sdr", "sdr_raw", "sdr_filtered",
                                          "estage_immediate", "estage_lookahead"},
                 ctx.jobs);
  return *runs;
}

Outcome criterion6(const Context& ctx) {
  const auto& runs = calibration_runs(ctx);
  const auto l2 = runs.lift("vtr2", "vtr25"), l5 = runs.lift("vtr5", "vtr25");
  const double ipv2 = l2.row("ipv").lift.value_or(0), ipv5 = l5.row("ipv").lift.value_or(0);
  const double p2 = l2.row("purchases").lift.value_or(0), p5 = l5.row("purchases").lift.value_or(0);
  const bool ok = ipv2 > ipv5 && ipv5 > 0.0 && p2 < p5 && p2 < 0.0;
  return {ok, fmt::format("vs 25s: IPV 2s {:+.2f}% > 5s {:+.2f}% > 25s +0.00%; purchases 2s {:+.2f}%, 5s {:+.2f}%, "
                          "25s +0.00%",
                          100 * ipv2, 100 * ipv5, 100 * p2, 100 * p5)};
}

Outcome criterion7(const Context& ctx) {
  const auto& runs = calibration_runs(ctx);
  const auto raw = runs.lift("sdr_raw", "no_sdr"), filtered = runs.lift("sdr_filtered", "no_sdr");
  const auto& raw_p = raw.row("purchases");
  const auto& f_p = filtered.row("purchases");
  const auto& f_ipv = filtered.row("ipv");
  const bool drop = raw_p.lift && *raw_p.lift < 0 && raw_p.p_one_sided > 1 - kAlpha;
  const bool recover = f_p.lift && *f_p.lift >= 0;
  const bool ipv = f_ipv.lift && *f_ipv.lift > 0;
  return {drop && recover && ipv,
          fmt::format("vs no-sdr: unfiltered {}; filtered {}, {}", lift_text(raw_p), lift_text(f_p),
                      lift_text(f_ipv))};
}

Outcome criterion8(const Context& ctx) {
  const auto& runs = calibration_runs(ctx);
  const auto on = runs.lift("estage_lookahead", "estage_immediate").row("purchases");
  const bool gain = on.lift && *on.lift > 0 && on.p_one_sided < kAlpha;

  const auto cfg = ctx.load("degenerate.ini");
  const ArmReports flat(cfg, {"estage_lookahead", "estage_immediate"}, ctx.jobs);
  const auto off = flat.lift("estage_lookahead", "estage_immediate").row("purchases");
  const double p_two = 2 * std::min(off.p_one_sided, 1 - off.p_one_sided);
  const bool same = p_two >= kAlpha;
  return {gain && same, fmt::format("with comparison bonus: {}; degenerate funnels: {} (two-sided p={:.3f})",
                                    lift_text(on), pct(off.lift), p_two)};
}

Outcome criterion9(const Context&) {
  const std::vector<SuiteResult> suites = {auc_matches_pairwise(kOracleSeed, 100),
                                           bce_gradient_matches_finite_differences(kOracleSeed, 20),
                                           spearman_matches_rank_then_pearson(kOracleSeed, 100),
                                           exposure_probs_properties(kOracleSeed, 10000)};
  bool ok = true;
  std::vector<std::string> parts;
  for (const auto& s : suites) {
    ok = ok && s.passed;
    parts.push_back(s.name + " " + (s.passed ? "ok" : "FAILED") + " (" + s.detail + ")");
  }
  return {ok, fmt::format("{}", fmt::join(parts, "; "))};
}

Outcome criterion10(const Context& ctx) {
  const auto cfg = ctx.load("calibration.ini");
  auto spec = cfg.tune;
  spec.budget = 200;
  int strictly = 0, never_worse = 0;
  double mean_gain = 0.0;
  const ArmSpec& arm = cfg.arm("tuned");
  for (int r = 0; r < cfg.replicates; ++r) {
    const auto rep = make_replicate(cfg, replicate_seed(cfg, r), ctx.jobs);
    const auto model = train_arm(cfg, rep, arm);
    const auto validation = build_validation_set(rep.world, rep.valid_logs, model, arm.labels);
    spec.seed = replicate_seed(cfg, r);
    const auto result = tune(spec, validation, ctx.jobs);
    const double base = tune_objective({1, 1, 1}, validation);
    never_worse += result.best_objective >= base ? 1 : 0;
    strictly += result.best_objective > base ? 1 : 0;
    mean_gain += (result.best_objective - base) / cfg.replicates;
  }
  const int need = (25 * cfg.replicates + 29) / 30;
  return {never_worse == cfg.replicates && strictly >= need,
          fmt::format("budget 200: tuned >= default in {}/{} seeds, strictly better in {}/{} (need {}), "
                      "mean AUC-sum gain {:.4f}",
                      never_worse, cfg.replicates, strictly, cfg.replicates, need, mean_gain)};
}

Outcome criterion11(const Context& ctx) {
  const auto cfg = ctx.load("calibration.ini", "[session]\nslate_size = 10\n[experiment]\nreplicates = 5\n");
  const ArmReports runs(cfg, {"msc_on"}, ctx.jobs);
  const double all_floor = cfg.source.get_double("acceptance/hit_all_min", 0.75);
  const double gap_floor = cfg.source.get_double("acceptance/hit_gap_min", 0.25);
  bool ordered = true;
  std::vector<DecisionRecord> all;
  for (const auto& d : runs.decisions("msc_on")) {
    const auto h = hitrate_summary(d);
    ordered = ordered && h.mean.back() >= h.mean.front();
    all.insert(all.end(), d.begin(), d.end());
  }
  const auto h = hitrate_summary(all);
  const double hit1 = h.mean.front(), hit_all = h.mean.back();
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < h.ks.size(); ++i)
    parts.push_back(fmt::format("@{}{} {:.1f}%", i + 1 == h.ks.size() ? "All=" : "", h.ks[i], 100 * h.mean[i]));
  return {ordered && hit_all >= all_floor && hit1 <= hit_all - gap_floor,
          fmt::format("{} decisions: {}; Hit@All >= Hit@1 in every replicate: {}", h.decisions,
                      fmt::join(parts, ", "), ordered ? "yes" : "no")};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return files;
}

Outcome criterion12(const Context& ctx) {
  const auto cfg = ctx.load("calibration.ini", "[experiment]\nreplicates = 2\n");
  const fs::path root = fs::temp_directory_path() / "stcrank_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> snaps;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / fmt::format("run{}", run);
    const Stages st{cfg, out, 0, ctx.jobs};
    st.gen_world();
    st.simulate();
    for (const std::string arm : {"msc_on", "msc_off", "tuned"}) {
      st.build_labels(arm);
      st.train(arm);
      if (arm == "tuned") st.tune(arm);
      st.rank(arm);
      st.rerank(arm);
      st.simulate_arm(arm);
      st.report_arm(arm);
    }
    st.report();
    st.report_compare("msc_on", "msc_off");
    run_experiment(cfg, "msc_on", "msc_off", out, ctx.jobs);
    snaps.push_back(snapshot(out));
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : snaps[0]) {
    const auto it = snaps[1].find(name);
    if (it == snaps[1].end() || it->second != bytes) ++differing;
  }
  const bool identical = differing == 0 && snaps[0].size() == snaps[1].size();
  fs::remove_all(root);
  const double elapsed = seconds_since(ctx.start);
  return {identical && elapsed < 600.0,
          fmt::format("{} artifacts compared across two full pipeline runs, {} differ; total acceptance runtime "
                      "{:.0f}s (limit 600s)",
                      snaps[0].size(), differing, elapsed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-12"};
  Context ctx;
  std::string config_dir = "configs";
  std::vector<int> only;
  app.add_option("--config-dir", config_dir, "directory holding calibration.ini and friends");
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--replicates", ctx.replicates, "override replicate counts (development only)");
  app.add_option("--jobs", ctx.jobs, "worker threads");
  CLI11_PARSE(app, argc, argv);
  ctx.config_dir = config_dir;

  const std::vector<std::function<Outcome(const Context&)>> criteria = {
      criterion1, criterion2, criterion3, criterion4,  criterion5,  criterion6,
      criterion7, criterion8, criterion9, criterion10, criterion11, criterion12};
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t = Clock::now();
    Outcome o;
    try {
      o = criteria[i](ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.passed;
    fmt::print("criterion {:>2}: {} ({:.1f}s) {}\n", id, o.passed ? "PASS" : "FAIL", seconds_since(t), o.detail);
    std::fflush(stdout);
  }
  return all ? 0 : 4;
}
