#pragma once

#include "stcrank/config.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stcrank {

enum class Involvement { standard, high_involvement };

struct CategoryParams {
  int category_id = 0;
  Involvement involvement = Involvement::standard;
  double base_cvr = 0.0;  // conversion floor at zero quality and affinity
  double cvr_gain = 0.0;  // added when quality * affinity = 1
  double view_time_mu = 0.0;  // log-seconds location of the view-time law
  double view_time_sigma = 1.0;
  double appeal_view_gain = 0.0;
  double conversion_view_shift = 0.0;  // log-location shift when the slot converts
  double exit_after_conversion = 0.0;
  double exit_without_conversion = 0.0;
  double fstage_comparison_bonus = 0.0;  // per prior same-category view
  double comparison_bonus_cap = 0.0;
  double ctr_base = 0.0;
  double sdr_star_base = 0.0;  // E-stage detail page -> F-stage entry
};

struct UserProfile {
  int user_id = 0;
  std::vector<double> latent_affinity;  // one entry per category, in [0, 1]
  double patience = 0.5;
  double return_propensity = 0.5;
};

struct Item {
  int item_id = 0;
  int category_id = 0;
  double quality = 0.0;
  double appeal = 0.0;  // drives view time and browsing continuation, not purchase
  Involvement involvement = Involvement::standard;
};

/// Couplings shared by the whole population.
struct BehaviorParams {
  double affinity_view_gain = 0.0;
  double patience_exit_gain = 0.0;
  double appeal_exit_gain = 0.0;
  double ctr_affinity_gain = 0.0;
  double ctr_appeal_gain = 0.0;
  double sdr_star_affinity_gain = 0.0;
};

/// Shape of one simulated session and the daily return model.
struct SessionParams {
  int estage_candidates = 30;
  int estage_list_length = 8;
  int fstage_candidates = 50;  // n
  int slate_size = 5;          // m
  int max_pages = 3;
  double same_category_fraction = 0.8;
  int sessions_per_active_user = 1;
  double dau_beta = 0.0;
  double satisfaction_ipv_weight = 0.0;
  double satisfaction_purchase_weight = 0.0;
};

/// Uniform range [lo, hi] from which a per-category parameter is drawn.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct CategoryRanges {
  Range base_cvr{0.01, 0.03};
  Range cvr_gain{0.05, 0.10};
  Range view_time_mu{1.2, 1.8};
  Range view_time_sigma{0.9, 1.1};
  Range appeal_view_gain{1.0, 1.5};
  Range conversion_view_shift{1.2, 1.6};
  Range exit_after_conversion{0.55, 0.7};
  Range exit_without_conversion{0.15, 0.25};
  Range ctr_base{0.05, 0.12};
  Range sdr_star_base{0.6, 0.8};
};

struct WorldConfig {
  int users = 200;
  int categories = 6;
  int items_per_category = 40;
  int day_count = 7;
  double high_involvement_fraction = 0.5;
  double comparison_bonus = 0.02;  // applied to high-involvement categories only
  double comparison_bonus_cap = 0.1;
  Range affinity_beta{2.0, 2.0};  // (a, b) of a Beta law
  Range patience_beta{2.0, 2.0};
  Range return_propensity_beta{6.0, 4.0};
  Range quality_beta{2.0, 2.0};
  Range appeal_beta{2.0, 2.0};
  CategoryRanges ranges;
  BehaviorParams behavior;
  SessionParams session;
};

/// Reads [world], [world.ranges], [behavior] and [session].
WorldConfig world_config_from(const Config& config);

/// Throws ConfigError if counts or probabilities are out of range.
void validate(const WorldConfig& config);

struct World {
  std::vector<UserProfile> users;
  std::vector<Item> items;
  std::vector<CategoryParams> categories;
  std::uint64_t seed = 0;
  int day_count = 0;
  BehaviorParams behavior;
  SessionParams session;
  std::vector<std::vector<int>> items_by_category;  // derived, see index()
  std::vector<double> category_mean_quality;
  std::vector<double> category_mean_appeal;

  /// Rebuilds the derived lookup tables after items or categories change.
  void index();

  const UserProfile& user(int user_id) const;
  const Item& item(int item_id) const;
  const CategoryParams& category(int category_id) const;
};

World generate_world(const WorldConfig& config, std::uint64_t seed);

nlohmann::json to_json(const World& world);
World world_from_json(const nlohmann::json& j);

struct BehaviorContext {
  int same_category_views = 0;  // same-category items seen earlier in the session
};

/// Ground-truth behaviour of one user toward one item.
struct TrueBehaviorProbs {
  double ctr = 0.0;
  double cvr = 0.0;
  double sdr = 0.0;
  double sdr_star = 0.0;
  double exit_if_converted = 0.0;
  double exit_if_not_converted = 0.0;
  double view_location = 0.0;  // log-seconds, before the conversion shift
  double conversion_view_shift = 0.0;
  double view_sigma = 1.0;

  /// P(T > threshold) under the conversion mixture.
  double vtr(double threshold_seconds) const;
};

TrueBehaviorProbs true_scores(const World& world, int user_id, int item_id,
                              BehaviorContext context = {});

/// Ground-truth probability that an F-stage session triggered by `trigger`
/// contains at least one conversion, assuming the session browses average
/// items drawn like the retrieval mix. Backs the oracle look-ahead head.
double lookahead_conversion_truth(const World& world, int user_id, int trigger_item_id);

struct SlotOutcome {
  int position = 0;  // 1-based
  int item_id = 0;
  double view_time_seconds = 0.0;
  bool converted = false;
  bool swiped_down = false;
  bool exposed = false;
};

struct EStageOutcome {
  std::vector<int> impressions;  // E-stage items examined, in list order
  bool clicked = false;
  bool converted = false;  // purchase on the E-stage item detail page
  bool entered_fstage = false;
};

struct SessionLog {
  int user_id = 0;
  int day = 0;
  int session_index = 0;
  int trigger_item_id = -1;
  EStageOutcome estage;
  std::vector<SlotOutcome> fstage_slots;
  int exited_at = 0;  // position of the non-swipe; 0 when the list ran out
  bool end_of_list = false;

  int exposed_count() const;
};

nlohmann::json to_json(const SessionLog& log);
SessionLog session_from_json(const nlohmann::json& j);

inline constexpr int kSessionSchemaVersion = 1;

/// Identifies the random stream of one session. Arms that share a key see
/// the same draws for the same decisions.
struct SessionKey {
  std::uint64_t seed = 0;
  int user_id = 0;
  int day = 0;
  int session_index = 0;

  std::uint64_t stream(std::uint64_t purpose, std::uint64_t index = 0) const;
};

struct FStageRequest {
  int user_id = 0;
  int day = 0;
  int session_index = 0;
  int trigger_item_id = 0;
  int page = 0;  // 0-based
  int slate_size = 0;
  std::span<const int> candidates;  // not yet shown in this session
  std::span<const int> already_shown;
};

using FStageRanker = std::function<std::vector<int>(const FStageRequest&)>;
using EStageRanker =
    std::function<std::vector<int>(int user_id, std::span<const int> candidates, int list_length)>;

struct PolicyBundle {
  EStageRanker estage;
  FStageRanker fstage;
};

/// Candidate pool of the F stage for one session: mostly the trigger's
/// category, topped up with random other items.
std::vector<int> retrieve_fstage_candidates(const World& world, int trigger_item_id,
                                            const SessionKey& key);

std::vector<int> sample_estage_candidates(const World& world, const SessionKey& key);

SessionLog simulate_session(const World& world, const UserProfile& user,
                            std::span<const int> ranked_estage, const FStageRanker& fstage_ranker,
                            const SessionKey& key);

struct DayResult {
  int day = 0;
  std::vector<SessionLog> logs;
  std::vector<int> active_users;
  std::vector<double> satisfaction;  // indexed by user id, feeds the next day
};

double user_satisfaction(const World& world, std::span<const SessionLog> user_sessions);

/// One simulated day. `previous_satisfaction` is indexed by user id and may be
/// empty on the first day.
DayResult simulate_day(const World& world, const PolicyBundle& policy, int day,
                       std::uint64_t run_seed, std::span<const double> previous_satisfaction,
                       int jobs = 1);

std::vector<DayResult> simulate_days(const World& world, const PolicyBundle& policy,
                                     int first_day, int days, std::uint64_t run_seed,
                                     int jobs = 1);

}  // namespace stcrank
