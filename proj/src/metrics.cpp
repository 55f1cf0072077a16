#include "stcrank/metrics.hpp"

#include "stcrank/error.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace stcrank {

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("spearman_rho inputs must have equal lengths");
  if (x.size() < 2) throw InputError("spearman_rho needs at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = 0.5 * (n + 1.0);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("spearman_rho is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<SlotOutcome> exposed_slots(std::span<const SessionLog> logs) {
  std::vector<SlotOutcome> out;
  for (const auto& log : logs)
    for (const auto& s : log.fstage_slots)
      if (s.exposed) out.push_back(s);
  return out;
}

std::vector<BucketCorrelation> bucketed_spearman(std::span<const SlotOutcome> slots,
                                                 std::span<const double> edges) {
  if (edges.size() < 2) throw InputError("need at least two bucket edges");
  const std::size_t buckets = edges.size() - 1;
  std::vector<std::vector<double>> conv(buckets), time(buckets);
  for (const auto& s : slots) {
    if (!s.exposed) continue;
    const auto it = std::upper_bound(edges.begin(), edges.end(), s.view_time_seconds);
    if (it == edges.begin() || it == edges.end()) continue;
    const auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
    conv[b].push_back(s.converted ? 1.0 : 0.0);
    time[b].push_back(s.view_time_seconds);
  }
  std::vector<BucketCorrelation> out;
  for (std::size_t b = 0; b < buckets; ++b) {
    BucketCorrelation row{edges[b], edges[b + 1], conv[b].size(),
                          static_cast<std::size_t>(std::count(conv[b].begin(), conv[b].end(), 1.0)),
                          std::nullopt};
    if (row.slots >= 2 && row.conversions > 0 && row.conversions < row.slots) {
      try {
        row.rho = spearman_rho(conv[b], time[b]);
      } catch (const DegenerateError&) {
      }
    }
    out.push_back(row);
  }
  return out;
}

ExitProbabilityTable exit_probability_table(std::span<const SessionLog> sessions, bool first_slot_only) {
  ExitProbabilityTable t;
  for (const auto& log : sessions) {
    for (const auto& s : log.fstage_slots) {
      if (!s.exposed) continue;
      if (first_slot_only && s.position != 1) continue;
      const int col = s.converted ? 1 : 0;
      ++t.slots[col];
      for (std::size_t w = 0; w < t.kWindows.size(); ++w)
        if (log.exited_at != 0 && log.exited_at - s.position < t.kWindows[w]) ++t.exits[w][col];
    }
  }
  for (std::size_t w = 0; w < t.kWindows.size(); ++w)
    for (int c = 0; c < 2; ++c)
      t.probability[w][c] = t.slots[c] == 0 ? std::nan("")
                                            : static_cast<double>(t.exits[w][c]) / static_cast<double>(t.slots[c]);
  return t;
}

double hitrate_at_k(std::span<const int> reranked, std::span<const int> pointwise, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > reranked.size() ||
      static_cast<std::size_t>(k) > pointwise.size())
    throw InputError("hitrate k must lie in [1, min(list lengths)]");
  std::set<int> top(pointwise.begin(), pointwise.begin() + k);
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += top.count(reranked[i]) ? 1 : 0;
  return static_cast<double>(hits) / k;
}

double MetricReport::metric(const std::string& name) const {
  if (name == "ipv_f") return static_cast<double>(ipv_f);
  if (name == "ipv_e") return static_cast<double>(ipv_e);
  if (name == "ipv") return static_cast<double>(ipv_f + ipv_e);
  if (name == "purchases_f") return static_cast<double>(purchases_f);
  if (name == "purchases_e") return static_cast<double>(purchases_e);
  if (name == "purchases") return static_cast<double>(purchases);
  if (name == "dau_proxy") return dau_proxy;
  if (name == "depth_at_conversion") return depth_at_conversion;
  if (name == "sessions") return static_cast<double>(sessions);
  if (name == "exposed_slots") return static_cast<double>(exposed_slots);
  throw LookupError("unknown metric '" + name + "'");
}

MetricReport session_metrics(std::span<const SessionLog> logs, const World& world) {
  if (logs.empty()) throw InputError("cannot build a metric report from an empty log set");
  MetricReport r;
  std::vector<CategoryBreakdown> cats(world.categories.size());
  std::vector<double> depth_sum(world.categories.size(), 0.0);
  for (std::size_t c = 0; c < cats.size(); ++c) {
    cats[c].category_id = static_cast<int>(c);
    cats[c].high_involvement = world.categories[c].involvement == Involvement::high_involvement;
  }
  std::map<int, std::set<int>> active_by_day;
  double depth_total = 0.0;
  for (const auto& log : logs) {
    ++r.sessions;
    active_by_day[log.day].insert(log.user_id);
    if (log.estage.clicked) ++r.ipv_e;
    if (log.estage.converted) {
      ++r.purchases_e;
      ++cats[world.item(log.trigger_item_id).category_id].purchases_e;
    }
    if (log.estage.entered_fstage) ++r.fstage_entries;
    for (const auto& s : log.fstage_slots) {
      if (!s.exposed) continue;
      ++r.exposed_slots;
      auto& cat = cats[world.item(s.item_id).category_id];
      if (s.view_time_seconds > kIpvSeconds) {
        ++r.ipv_f;
        ++cat.ipv_f;
      }
      if (s.converted) {
        ++r.purchases_f;
        ++cat.purchases_f;
        depth_total += s.position;
        depth_sum[static_cast<std::size_t>(cat.category_id)] += s.position;
      }
    }
  }
  r.purchases = r.purchases_f + r.purchases_e;
  const int first = active_by_day.begin()->first, last = active_by_day.rbegin()->first;
  r.days = last - first + 1;
  long active = 0;
  for (const auto& [day, users] : active_by_day) active += static_cast<long>(users.size());
  r.dau_proxy = static_cast<double>(active) / r.days;
  r.depth_at_conversion = r.purchases_f > 0 ? depth_total / static_cast<double>(r.purchases_f) : 0.0;
  for (std::size_t c = 0; c < cats.size(); ++c)
    cats[c].depth_at_conversion =
        cats[c].purchases_f > 0 ? depth_sum[c] / static_cast<double>(cats[c].purchases_f) : 0.0;
  r.categories = std::move(cats);
  return r;
}

const LiftRow& LiftTable::row(const std::string& metric) const {
  for (const auto& r : rows)
    if (r.metric == metric) return r;
  throw LookupError("lift table has no metric '" + metric + "'");
}

LiftTable compare(const MetricReport& a, const MetricReport& b) {
  return compare(std::span(&a, 1), std::span(&b, 1));
}

LiftTable compare(std::span<const MetricReport> a, std::span<const MetricReport> b, double confidence) {
  if (a.size() != b.size() || a.empty())
    throw InputError("paired comparison needs equal, non-zero replicate counts");
  LiftTable t;
  t.confidence = confidence;
  const std::size_t n = a.size();
  for (const auto& metric : kLiftMetrics) {
    LiftRow row;
    row.metric = metric;
    row.replicates = n;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double va = a[i].metric(metric), vb = b[i].metric(metric);
      row.mean_a += va;
      row.mean_b += vb;
      d[i] = va - vb;
    }
    row.mean_a /= static_cast<double>(n);
    row.mean_b /= static_cast<double>(n);
    const double mean_d = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    if (row.mean_b > 0.0) row.lift = mean_d / row.mean_b;
    if (n >= 2) {
      double ss = 0.0;
      for (double x : d) ss += (x - mean_d) * (x - mean_d);
      const double se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
      boost::math::students_t dist(static_cast<double>(n - 1));
      const double tcrit = boost::math::quantile(dist, 0.5 + 0.5 * confidence);
      if (row.mean_b > 0.0) {
        row.ci_lo = (mean_d - tcrit * se) / row.mean_b;
        row.ci_hi = (mean_d + tcrit * se) / row.mean_b;
      }
      if (se > 0.0) {
        row.t_stat = mean_d / se;
        row.p_one_sided = boost::math::cdf(boost::math::complement(dist, row.t_stat));
      } else {
        row.t_stat = mean_d > 0 ? kInfinity : (mean_d < 0 ? -kInfinity : 0.0);
        row.p_one_sided = mean_d > 0 ? 0.0 : (mean_d < 0 ? 1.0 : 0.5);
      }
    }
    t.rows.push_back(row);
  }
  return t;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string pct(const std::optional<double>& v) { return v ? fmt::format("{:+.2f}%", 100.0 * *v) : "n/a"; }

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories)
    cats.push_back({{"category", c.category_id},
                    {"high_involvement", c.high_involvement},
                    {"ipv_f", c.ipv_f},
                    {"purchases_f", c.purchases_f},
                    {"purchases_e", c.purchases_e},
                    {"depth_at_conversion", c.depth_at_conversion}});
  return {{"v", 1},
          {"sessions", r.sessions},
          {"fstage_entries", r.fstage_entries},
          {"exposed_slots", r.exposed_slots},
          {"ipv_f", r.ipv_f},
          {"ipv_e", r.ipv_e},
          {"purchases_f", r.purchases_f},
          {"purchases_e", r.purchases_e},
          {"purchases", r.purchases},
          {"days", r.days},
          {"dau_proxy", r.dau_proxy},
          {"depth_at_conversion", r.depth_at_conversion},
          {"categories", cats}};
}

nlohmann::json to_json(const LiftTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"metric", r.metric},
                    {"mean_a", r.mean_a},
                    {"mean_b", r.mean_b},
                    {"lift", opt(r.lift)},
                    {"ci_lo", opt(r.ci_lo)},
                    {"ci_hi", opt(r.ci_hi)},
                    {"t_stat", num(r.t_stat)},
                    {"p_one_sided", r.p_one_sided},
                    {"replicates", r.replicates}});
  return {{"v", 1}, {"confidence", t.confidence}, {"rows", rows}};
}

nlohmann::json to_json(const ExitProbabilityTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t w = 0; w < t.kWindows.size(); ++w)
    rows.push_back({{"window", t.kWindows[w]},
                    {"not_converted", num(t.probability[w][0])},
                    {"converted", num(t.probability[w][1])}});
  return {{"v", 1}, {"slots", {t.slots[0], t.slots[1]}}, {"rows", rows}};
}

nlohmann::json to_json(std::span<const BucketCorrelation> buckets) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : buckets)
    rows.push_back({{"lo", b.lo}, {"hi", num(b.hi)}, {"slots", b.slots},
                    {"conversions", b.conversions}, {"rho", opt(b.rho)}});
  return {{"v", 1}, {"rows", rows}};
}

std::string format_report(const MetricReport& r) {
  std::string out;
  out += fmt::format("{:<28}{:>14}\n", "metric", "value");
  out += fmt::format("{:<28}{:>14}\n", "sessions", r.sessions);
  out += fmt::format("{:<28}{:>14}\n", "F-stage entries", r.fstage_entries);
  out += fmt::format("{:<28}{:>14}\n", "exposed F slots", r.exposed_slots);
  out += fmt::format("{:<28}{:>14}\n", "IPV (F)", r.ipv_f);
  out += fmt::format("{:<28}{:>14}\n", "IPV (E)", r.ipv_e);
  out += fmt::format("{:<28}{:>14}\n", "purchases (F)", r.purchases_f);
  out += fmt::format("{:<28}{:>14}\n", "purchases (E)", r.purchases_e);
  out += fmt::format("{:<28}{:>14}\n", "purchases (E+F)", r.purchases);
  out += fmt::format("{:<28}{:>14.3f}\n", "DAU proxy (simulated)", r.dau_proxy);
  out += fmt::format("{:<28}{:>14.3f}\n", "depth at conversion", r.depth_at_conversion);
  out += fmt::format("\n{:<10}{:>6}{:>10}{:>14}{:>14}{:>10}\n", "category", "HI", "IPV (F)",
                     "purch. (F)", "purch. (E)", "depth");
  for (const auto& c : r.categories)
    out += fmt::format("{:<10}{:>6}{:>10}{:>14}{:>14}{:>10.3f}\n", c.category_id,
                       c.high_involvement ? "yes" : "no", c.ipv_f, c.purchases_f, c.purchases_e,
                       c.depth_at_conversion);
  return out;
}

std::string format_lift(const LiftTable& t) {
  std::string out = fmt::format("{:<22}{:>12}{:>12}{:>10}{:>22}{:>10}\n", "metric", "mean A",
                                "mean B", "lift", fmt::format("{:.0f}% CI", 100 * t.confidence),
                                "p(A>B)");
  for (const auto& r : t.rows) {
    const std::string label = r.metric == "dau_proxy" ? "dau_proxy (simulated)" : r.metric;
    const std::string ci = r.ci_lo ? fmt::format("[{}, {}]", pct(r.ci_lo), pct(r.ci_hi)) : "n/a";
    out += fmt::format("{:<22}{:>12.3f}{:>12.3f}{:>10}{:>22}{:>10.4f}\n", label, r.mean_a, r.mean_b,
                       pct(r.lift), ci, r.p_one_sided);
  }
  return out;
}

std::string format_exit_table(const ExitProbabilityTable& t) {
  std::string out = fmt::format("{:<22}{:>12}{:>12}\n", "session exit", "y_cvr=0", "y_cvr=1");
  const char* names[] = {"immediate exit", "exit within 3 PVs", "exit within 5 PVs"};
  for (std::size_t w = 0; w < t.kWindows.size(); ++w)
    out += fmt::format("{:<22}{:>11.1f}%{:>11.1f}%\n", names[w], 100 * t.probability[w][0],
                       100 * t.probability[w][1]);
  return out;
}

std::string format_buckets(std::span<const BucketCorrelation> buckets) {
  std::string out = fmt::format("{:<14}{:>10}{:>12}{:>12}\n", "T bucket (s)", "slots", "converted", "rho");
  for (const auto& b : buckets) {
    const std::string range = std::isfinite(b.hi) ? fmt::format("{:g}-{:g}", b.lo, b.hi)
                                                   : fmt::format(">{:g}", b.lo);
    out += fmt::format("{:<14}{:>10}{:>12}{:>12}\n", range, b.slots, b.conversions,
                       b.rho ? fmt::format("{:.4f}", *b.rho) : "undefined");
  }
  return out;
}

}  // namespace stcrank
