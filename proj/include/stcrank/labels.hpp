#pragma once

#include "stcrank/config.hpp"
#include "stcrank/features.hpp"
#include "stcrank/worldsim.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stcrank {

enum class Objective { vtr, cvr, sdr, ctr, sdr_star, cvr_star };

inline constexpr std::array<Objective, 6> kAllObjectives = {
    Objective::vtr, Objective::cvr, Objective::sdr,
    Objective::ctr, Objective::sdr_star, Objective::cvr_star};

inline constexpr std::array<Objective, 3> kFStageObjectives = {Objective::vtr, Objective::cvr,
                                                               Objective::sdr};

std::string_view name(Objective o);
Objective objective_from(std::string_view s);

class VtrThreshold {
 public:
  explicit VtrThreshold(double seconds);
  double seconds() const { return seconds_; }

 private:
  double seconds_;
};

enum class SdrMode { all_positions, first_position_only };

struct LabelSpec {
  VtrThreshold vtr_threshold{5.0};
  SdrMode sdr_mode = SdrMode::all_positions;
  bool conflict_filter = false;
};

/// Reads vtr_threshold, sdr_mode and conflict_filter from `section`.
LabelSpec label_spec_from(const Config& config, const std::string& section,
                          const LabelSpec& fallback = {});

struct SampleSource {
  int user_id = 0;
  int day = 0;
  int session_index = 0;
  int position = 0;  // 0 for E-stage samples

  friend bool operator==(const SampleSource&, const SampleSource&) = default;
};

struct TrainingSample {
  FeatureVector features;
  Objective objective = Objective::cvr;
  int label = 0;
  double weight = 1.0;  // z in {0, 1}
  SampleSource source;
  int item_id = 0;
};

/// 1 iff view time strictly exceeds the threshold.
int binarize_vtr(double view_time_seconds, VtrThreshold threshold);

/// Swipe-down samples over the exposed slots of one F-stage session. With
/// conflict_filter, exits that converted get weight 0; labels never change.
std::vector<TrainingSample> sdr_samples(const World& world, const SessionLog& session,
                                        SdrMode mode, bool conflict_filter);

/// 1 iff the session's F stage produced at least one conversion.
int lookahead_cvr_label(const SessionLog& session);

std::vector<TrainingSample> build_training_set(const World& world,
                                               std::span<const SessionLog> logs,
                                               const LabelSpec& spec);

nlohmann::json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const nlohmann::json& j);

}  // namespace stcrank
