#pragma once

#include "stcrank/worldsim.hpp"

#include <json.hpp>

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stcrank {

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman's rho with average-rank ties. Throws DegenerateError if either
/// input is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// View-time bucket edges in seconds: [0, 2), [2, 5), [5, 25), [25, inf).
inline constexpr std::array<double, 5> kViewTimeBucketEdges = {0.0, 2.0, 5.0, 25.0, kInfinity};

struct BucketCorrelation {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t slots = 0;
  std::size_t conversions = 0;
  std::optional<double> rho;  // empty when the bucket is degenerate
};

/// Spearman's rho between conversion and view time inside each bucket, over
/// exposed slots.
std::vector<BucketCorrelation> bucketed_spearman(std::span<const SlotOutcome> slots,
                                                 std::span<const double> edges = kViewTimeBucketEdges);

std::vector<SlotOutcome> exposed_slots(std::span<const SessionLog> logs);

struct ExitProbabilityTable {
  static constexpr std::array<int, 3> kWindows = {1, 3, 5};
  // [window][converted]; NaN when no slot falls in the column.
  std::array<std::array<double, 2>, 3> probability{};
  std::array<std::array<std::size_t, 2>, 3> exits{};
  std::array<std::size_t, 2> slots{};
};

/// P(session exits within k PVs of a slot | that slot's conversion status),
/// counted from the slot itself (k = 1 is an immediate exit). Running off the
/// end of the list is not an exit.
ExitProbabilityTable exit_probability_table(std::span<const SessionLog> sessions,
                                            bool first_slot_only = false);

/// |top-k(a) and top-k(b)| / k.
double hitrate_at_k(std::span<const int> reranked, std::span<const int> pointwise, int k);

struct CategoryBreakdown {
  int category_id = 0;
  bool high_involvement = false;
  long ipv_f = 0;
  long purchases_f = 0;
  long purchases_e = 0;
  double depth_at_conversion = 0.0;
};

struct MetricReport {
  long sessions = 0;
  long fstage_entries = 0;
  long exposed_slots = 0;
  long ipv_f = 0;  // exposed F-stage slots viewed longer than 2 s
  long ipv_e = 0;  // E-stage clicks
  long purchases_f = 0;
  long purchases_e = 0;
  long purchases = 0;
  int days = 0;
  double dau_proxy = 0.0;  // mean simulated daily active users (a proxy, not real DAU)
  double depth_at_conversion = 0.0;  // mean position of converting F slots
  std::vector<CategoryBreakdown> categories;

  /// Named scalar used by lift tables.
  double metric(const std::string& name) const;
};

inline constexpr double kIpvSeconds = 2.0;

/// Throws InputError on an empty log set.
MetricReport session_metrics(std::span<const SessionLog> logs, const World& world);

inline const std::vector<std::string> kLiftMetrics = {
    "ipv_f", "ipv_e", "ipv", "purchases_f", "purchases_e", "purchases", "dau_proxy",
    "depth_at_conversion"};

struct LiftRow {
  std::string metric;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::optional<double> lift;  // (A - B) / B; empty when B is 0
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  double t_stat = 0.0;
  double p_one_sided = 0.5;  // H1: A > B
  std::size_t replicates = 0;
};

struct LiftTable {
  double confidence = 0.95;
  std::vector<LiftRow> rows;

  const LiftRow& row(const std::string& metric) const;
};

LiftTable compare(const MetricReport& a, const MetricReport& b);

/// Paired comparison over replicates that share random numbers.
LiftTable compare(std::span<const MetricReport> a, std::span<const MetricReport> b,
                  double confidence = 0.95);

nlohmann::json to_json(const MetricReport& r);
nlohmann::json to_json(const LiftTable& t);
nlohmann::json to_json(const ExitProbabilityTable& t);
nlohmann::json to_json(std::span<const BucketCorrelation> buckets);

std::string format_report(const MetricReport& r);
std::string format_lift(const LiftTable& t);
std::string format_exit_table(const ExitProbabilityTable& t);
std::string format_buckets(std::span<const BucketCorrelation> buckets);

}  // namespace stcrank
