#include <gtest/gtest.h>

#include "stcrank/config.hpp"
#include "stcrank/error.hpp"
#include "stcrank/metrics.hpp"
#include "stcrank/rng.hpp"
#include "stcrank/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

using namespace stcrank;

namespace {

SlotOutcome slot(int pos, double t, bool conv, bool swipe, bool exposed = true) {
  SlotOutcome s;
  s.position = pos;
  s.item_id = pos - 1;
  s.view_time_seconds = t;
  s.converted = conv;
  s.swiped_down = swipe;
  s.exposed = exposed;
  return s;
}

// Builds a session from view times and the 1-based slot that converted;
// every exposed slot but the last swipes on, the last one exits.
SessionLog session(const std::vector<double>& times, int converted_at, int slate = 0, int user = 0,
                   int day = 1) {
  SessionLog log;
  log.user_id = user;
  log.day = day;
  log.trigger_item_id = 0;
  log.estage.entered_fstage = true;
  log.estage.clicked = true;
  const int n = static_cast<int>(times.size());
  for (int i = 0; i < n; ++i)
    log.fstage_slots.push_back(slot(i + 1, times[i], i + 1 == converted_at, i + 1 < n));
  for (int i = n; i < slate; ++i) log.fstage_slots.push_back(slot(i + 1, 0, false, false, false));
  log.exited_at = n;
  return log;
}

World small_world() {
  return generate_world(world_config_from(Config::from_file(STCRANK_CONFIG_DIR "/smoke.ini")), 3);
}

PolicyBundle passthrough_policy() {
  return {[](int, std::span<const int> c, int len) { return std::vector<int>(c.begin(), c.begin() + len); },
          [](const FStageRequest& r) {
            return std::vector<int>(r.candidates.begin(), r.candidates.begin() + r.slate_size);
          }};
}

std::vector<SessionLog> simulated_logs(const World& w, std::uint64_t seed, int days) {
  std::vector<SessionLog> logs;
  for (const auto& d : simulate_days(w, passthrough_policy(), 1, days, seed, 2))
    logs.insert(logs.end(), d.logs.begin(), d.logs.end());
  return logs;
}

// Pearson correlation of ranks, ranks computed by counting.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double below = 0, equal = 0;
      for (double u : v) below += u < v[i], equal += u == v[i];
      r[i] = below + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

MetricReport report_with(double ipv_f) {
  MetricReport r;
  r.ipv_f = static_cast<long>(ipv_f);
  r.purchases_f = 10;
  r.purchases = 10;
  r.dau_proxy = 100;
  return r;
}

}  // namespace

TEST(Spearman, Examples) {
  std::vector<double> a = {1, 2, 3, 4}, b = {10, 20, 30, 40}, c = {4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman_rho(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(a, c), -1.0);
  std::vector<double> x = {1, 2, 2, 3}, y = {1, 3, 2, 4};
  EXPECT_NEAR(spearman_rho(x, y), spearman_oracle(x, y), 1e-12);
}

TEST(Spearman, AverageRanks) {
  std::vector<double> v = {5, 1, 5, 3};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Spearman, MatchesOracleWithTies) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(40));
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(5));
      y[i] = std::round(rng.uniform() * 6);
    }
    const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (constant) {
      EXPECT_THROW(spearman_rho(x, y), DegenerateError);
      continue;
    }
    ASSERT_NEAR(spearman_rho(x, y), spearman_oracle(x, y), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::vector<double> x(50), y(50), ex(50);
  for (int i = 0; i < 50; ++i) {
    x[i] = rng.normal();
    y[i] = x[i] + rng.normal();
    ex[i] = std::exp(3 * x[i]) + 7;
  }
  EXPECT_NEAR(spearman_rho(x, y), spearman_rho(ex, y), 1e-12);
}

TEST(Spearman, ConstantInputIsDegenerate) {
  std::vector<double> x = {2, 2, 2}, y = {1, 2, 3};
  EXPECT_THROW(spearman_rho(x, y), DegenerateError);
  EXPECT_THROW(spearman_rho(y, x), DegenerateError);
}

TEST(Buckets, AssignsByHalfOpenEdges) {
  std::vector<SlotOutcome> s = {slot(1, 1.0, false, true), slot(2, 2.0, true, true),
                                slot(3, 4.9, false, true), slot(4, 5.0, false, true),
                                slot(5, 30.0, true, false), slot(6, 100.0, false, false)};
  const auto b = bucketed_spearman(s);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[0].slots, 1u);
  EXPECT_EQ(b[1].slots, 2u);
  EXPECT_EQ(b[1].conversions, 1u);
  EXPECT_EQ(b[2].slots, 1u);
  EXPECT_EQ(b[3].slots, 2u);
  ASSERT_TRUE(b[1].rho.has_value());
  EXPECT_DOUBLE_EQ(*b[1].rho, -1.0);
  EXPECT_FALSE(b[0].rho.has_value());
  EXPECT_FALSE(b[2].rho.has_value());
  ASSERT_TRUE(b[3].rho.has_value());
  EXPECT_DOUBLE_EQ(*b[3].rho, -1.0);
}

TEST(Buckets, AllInOneBucket) {
  std::vector<SlotOutcome> s;
  for (int i = 0; i < 20; ++i) s.push_back(slot(i + 1, 6.0 + 0.5 * i, i % 3 == 0, true));
  const auto b = bucketed_spearman(s);
  EXPECT_EQ(b[2].slots, 20u);
  for (int k : {0, 1, 3}) {
    EXPECT_EQ(b[k].slots, 0u);
    EXPECT_FALSE(b[k].rho.has_value());
  }
  std::vector<double> conv, t;
  for (const auto& x : s) conv.push_back(x.converted), t.push_back(x.view_time_seconds);
  ASSERT_TRUE(b[2].rho.has_value());
  EXPECT_NEAR(*b[2].rho, spearman_oracle(conv, t), 1e-12);
}

TEST(Buckets, NoConversionsGivesNoRho) {
  std::vector<SlotOutcome> s;
  for (int i = 0; i < 10; ++i) s.push_back(slot(i + 1, 0.5 * i, false, true));
  for (const auto& b : bucketed_spearman(s)) EXPECT_FALSE(b.rho.has_value());
}

TEST(Buckets, UnexposedIgnored) {
  std::vector<SlotOutcome> s = {slot(1, 3.0, true, true), slot(2, 3.5, false, false, false)};
  EXPECT_EQ(bucketed_spearman(s)[1].slots, 1u);
}

TEST(ExitTable, AllConversionsExitImmediately) {
  std::vector<SessionLog> logs;
  for (int i = 0; i < 5; ++i) logs.push_back(session({3.0, 4.0}, 2));
  const auto t = exit_probability_table(logs);
  EXPECT_EQ(t.slots[1], 5u);
  EXPECT_EQ(t.slots[0], 5u);
  EXPECT_DOUBLE_EQ(t.probability[0][1], 1.0);
  EXPECT_DOUBLE_EQ(t.probability[0][0], 0.0);
  EXPECT_DOUBLE_EQ(t.probability[1][0], 1.0);
}

TEST(ExitTable, SingleOneSlotSession) {
  std::vector<SessionLog> logs = {session({1.0}, 0, 5)};
  const auto t = exit_probability_table(logs);
  EXPECT_EQ(t.slots[0], 1u);
  EXPECT_EQ(t.slots[1], 0u);
  for (int w = 0; w < 3; ++w) {
    EXPECT_DOUBLE_EQ(t.probability[w][0], 1.0);
    EXPECT_TRUE(std::isnan(t.probability[w][1]));
  }
}

TEST(ExitTable, WindowsCountForward) {
  // six slots, exit at 6: slot 1 is 5 PVs from the exit
  std::vector<SessionLog> logs = {session({1, 1, 1, 1, 1, 1}, 0)};
  const auto t = exit_probability_table(logs);
  EXPECT_EQ(t.exits[0][0], 1u);
  EXPECT_EQ(t.exits[1][0], 3u);
  EXPECT_EQ(t.exits[2][0], 5u);
  EXPECT_EQ(exit_probability_table(logs, true).slots[0], 1u);
}

TEST(ExitTable, EndOfListIsNotExit) {
  auto log = session({1, 1, 1}, 0);
  log.exited_at = 0;
  log.end_of_list = true;
  log.fstage_slots.back().swiped_down = true;
  std::vector<SessionLog> logs = {log};
  const auto t = exit_probability_table(logs);
  for (int w = 0; w < 3; ++w) EXPECT_EQ(t.exits[w][0], 0u);
}

TEST(Hitrate, Cases) {
  std::vector<int> a = {1, 2, 3, 4, 5}, b = {6, 7, 8, 9, 10};
  EXPECT_DOUBLE_EQ(hitrate_at_k(a, a, 5), 1.0);
  EXPECT_DOUBLE_EQ(hitrate_at_k(a, b, 3), 0.0);
  std::vector<int> fwd(10), rev(10);
  std::iota(fwd.begin(), fwd.end(), 0);
  std::reverse_copy(fwd.begin(), fwd.end(), rev.begin());
  EXPECT_DOUBLE_EQ(hitrate_at_k(rev, fwd, 1), 0.0);
  EXPECT_DOUBLE_EQ(hitrate_at_k(rev, fwd, 5), 0.0);
  EXPECT_DOUBLE_EQ(hitrate_at_k(rev, fwd, 6), 2.0 / 6);
  EXPECT_DOUBLE_EQ(hitrate_at_k(rev, fwd, 10), 1.0);
  EXPECT_THROW(hitrate_at_k(a, b, 0), InputError);
  EXPECT_THROW(hitrate_at_k(a, b, 6), InputError);
}

TEST(Hitrate, Symmetric) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> a(12), b(12);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    for (int i = 11; i > 0; --i) {
      std::swap(a[i], a[rng.below(i + 1)]);
      std::swap(b[i], b[rng.below(i + 1)]);
    }
    const int k = 1 + static_cast<int>(rng.below(12));
    ASSERT_EQ(hitrate_at_k(a, b, k), hitrate_at_k(b, a, k));
  }
}

TEST(SessionMetrics, HandExample) {
  const auto w = small_world();
  std::vector<SessionLog> logs = {session({1, 3, 10}, 3)};
  const auto r = session_metrics(logs, w);
  EXPECT_EQ(r.ipv_f, 2);
  EXPECT_EQ(r.purchases_f, 1);
  EXPECT_EQ(r.purchases, 1);
  EXPECT_EQ(r.ipv_e, 1);
  EXPECT_DOUBLE_EQ(r.depth_at_conversion, 3.0);
  EXPECT_EQ(r.exposed_slots, 3);
  EXPECT_DOUBLE_EQ(r.dau_proxy, 1.0);
}

TEST(SessionMetrics, UnexposedSlotsIgnored) {
  const auto w = small_world();
  std::vector<SessionLog> logs = {session({5, 5}, 0, 6)};
  const auto r = session_metrics(logs, w);
  EXPECT_EQ(r.exposed_slots, 2);
  EXPECT_EQ(r.ipv_f, 2);
}

TEST(SessionMetrics, EmptyLogsRejected) {
  const auto w = small_world();
  std::vector<SessionLog> none;
  EXPECT_THROW(session_metrics(none, w), InputError);
}

TEST(SessionMetrics, MatchesJsonRecount) {
  // Counts recomputed from the serialized logs, touching only JSON fields.
  const auto w = small_world();
  const auto logs = simulated_logs(w, 11, 3);
  ASSERT_FALSE(logs.empty());
  long ipv_f = 0, ipv_e = 0, pf = 0, pe = 0, depth = 0;
  std::map<int, std::set<int>> active;
  for (const auto& log : logs) {
    const auto j = to_json(log);
    active[j["day"].get<int>()].insert(j["user"].get<int>());
    ipv_e += j["estage"]["clicked"].get<int>();
    pe += j["estage"]["converted"].get<int>();
    for (const auto& s : j["fstage"]) {
      if (s["exp"].get<int>() == 0) continue;
      ipv_f += s["t"].get<double>() > 2.0;
      if (s["cvr"].get<int>()) ++pf, depth += s["pos"].get<int>();
    }
  }
  double dau = 0;
  for (const auto& [day, users] : active) dau += static_cast<double>(users.size());
  dau /= static_cast<double>(active.size());

  const auto r = session_metrics(logs, w);
  EXPECT_EQ(r.ipv_f, ipv_f);
  EXPECT_EQ(r.ipv_e, ipv_e);
  EXPECT_EQ(r.purchases_f, pf);
  EXPECT_EQ(r.purchases_e, pe);
  EXPECT_EQ(r.purchases, pf + pe);
  EXPECT_DOUBLE_EQ(r.dau_proxy, dau);
  if (pf > 0) {
    EXPECT_NEAR(r.depth_at_conversion, static_cast<double>(depth) / pf, 1e-12);
  }
  long cat_ipv = 0;
  for (const auto& c : r.categories) cat_ipv += c.ipv_f;
  EXPECT_EQ(cat_ipv, r.ipv_f);
}

TEST(Lift, IdenticalArmsGiveZero) {
  const auto w = small_world();
  const auto logs = simulated_logs(w, 12, 2);
  const auto r = session_metrics(logs, w);
  const auto t = compare(r, r);
  for (const auto& row : t.rows) {
    if (row.lift) {
      EXPECT_EQ(*row.lift, 0.0) << row.metric;
    }
  }
  std::vector<MetricReport> reps(5, r);
  const auto t5 = compare(reps, reps);
  EXPECT_EQ(*t5.row("ipv_f").lift, 0.0);
  EXPECT_EQ(*t5.row("ipv_f").ci_lo, 0.0);
  EXPECT_EQ(t5.row("ipv_f").p_one_sided, 0.5);
}

TEST(Lift, ArithmeticAndDirection) {
  std::vector<MetricReport> a, b;
  for (double x : {110.0, 121.0, 108.0, 115.0}) a.push_back(report_with(x));
  for (double x : {100.0, 110.0, 100.0, 105.0}) b.push_back(report_with(x));
  const auto t = compare(a, b);
  const auto& row = t.row("ipv_f");
  EXPECT_NEAR(*row.lift, (113.5 - 103.75) / 103.75, 1e-12);
  EXPECT_LT(row.p_one_sided, 0.05);
  EXPECT_LT(*row.ci_lo, *row.lift);
  EXPECT_GT(*row.ci_hi, *row.lift);
  EXPECT_GT(compare(b, a).row("ipv_f").p_one_sided, 0.95);
  EXPECT_THROW(t.row("clicks"), LookupError);
  EXPECT_THROW(compare(std::span(a).first(2), std::span(b)), InputError);
}

TEST(Lift, SharedNoiseNarrowsInterval) {
  // Arm A is arm B plus 2%; CRN pairs share the per-replicate noise.
  Rng rng(5);
  std::vector<MetricReport> a, b_paired, b_indep;
  for (int i = 0; i < 30; ++i) {
    const double noise = 1000 + 100 * rng.normal();
    a.push_back(report_with(std::round(1.02 * noise)));
    b_paired.push_back(report_with(std::round(noise)));
    b_indep.push_back(report_with(std::round(1000 + 100 * rng.normal())));
  }
  const auto paired = compare(a, b_paired), indep = compare(a, b_indep);
  const auto& crn = paired.row("ipv_f");
  const auto& ind = indep.row("ipv_f");
  EXPECT_LT(*crn.ci_hi - *crn.ci_lo, 0.5 * (*ind.ci_hi - *ind.ci_lo));
}

TEST(Lift, SimulatedCrnPairsAgreeExactly) {
  // Same world, same seed and same policy replay the same sessions.
  const auto w = small_world();
  const auto a = session_metrics(simulated_logs(w, 21, 2), w);
  const auto b = session_metrics(simulated_logs(w, 21, 2), w);
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Report, JsonAndFormatting) {
  const auto w = small_world();
  std::vector<SessionLog> logs = {session({1, 3, 10}, 3)};
  const auto r = session_metrics(logs, w);
  const auto j = to_json(r);
  EXPECT_EQ(j["ipv_f"], 2);
  EXPECT_FALSE(format_report(r).empty());
  EXPECT_NE(format_lift(compare(r, r)).find("ipv_f"), std::string::npos);
  const auto t = exit_probability_table(logs);
  EXPECT_TRUE(to_json(t).is_object());
  EXPECT_FALSE(format_exit_table(t).empty());
}
