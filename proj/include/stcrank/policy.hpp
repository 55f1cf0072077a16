#pragma once

#include "stcrank/config.hpp"
#include "stcrank/labels.hpp"
#include "stcrank/predictor.hpp"
#include "stcrank/ranker.hpp"
#include "stcrank/worldsim.hpp"

#include <json.hpp>

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace stcrank {

/// Scores candidates for serving.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// vtr, cvr and sdr of an F-stage candidate shown after `trigger_item_id`.
  virtual ObjectiveScores fstage(int user_id, int item_id, int trigger_item_id) const = 0;
  /// ctr and cvr of a homepage candidate, plus sdr_star and cvr_star when
  /// `lookahead` is set.
  virtual ObjectiveScores estage(int user_id, int item_id, bool lookahead) const = 0;
};

class ModelScorer final : public Scorer {
 public:
  ModelScorer(const World& world, const PredictorModel& model) : world_(world), model_(model) {}
  ObjectiveScores fstage(int user_id, int item_id, int trigger_item_id) const override;
  ObjectiveScores estage(int user_id, int item_id, bool lookahead) const override;

 private:
  const World& world_;
  const PredictorModel& model_;
};

/// Ground-truth probabilities from the simulator. The F-stage context counts
/// the trigger as one prior same-category view.
class OracleScorer final : public Scorer {
 public:
  OracleScorer(const World& world, double vtr_threshold_seconds)
      : world_(world), vtr_threshold_(vtr_threshold_seconds) {}
  ObjectiveScores fstage(int user_id, int item_id, int trigger_item_id) const override;
  ObjectiveScores estage(int user_id, int item_id, bool lookahead) const override;

 private:
  const World& world_;
  double vtr_threshold_;
};

enum class FStagePolicy { pointwise, beam, random };
enum class EStagePolicy { immediate, lookahead, random };

FStagePolicy fstage_policy_from(const std::string& s);
EStagePolicy estage_policy_from(const std::string& s);
std::string to_string(FStagePolicy p);
std::string to_string(EStagePolicy p);

struct ArmSpec {
  std::string name;
  LabelSpec labels;
  EnsembleWeights weights;
  FStagePolicy fstage = FStagePolicy::pointwise;
  EStagePolicy estage = EStagePolicy::immediate;
  double alpha = 1.0;
  int beam_width = 25;
  bool oracle = false;  // serve ground truth instead of a trained model
  bool tune = false;
};

/// Reads [arm.<name>]; keys missing there come from [labels], [ensemble],
/// [ranking] and [beam].
ArmSpec arm_spec_from(const Config& config, const std::string& name);

/// Names of all [arm.*] sections in file order.
std::vector<std::string> declared_arms(const Config& config);

nlohmann::json to_json(const ArmSpec& arm);

/// Point-wise and re-ranked top-m lists of one F-stage request.
struct DecisionRecord {
  int user_id = 0;
  int day = 0;
  int session_index = 0;
  int page = 0;
  std::vector<int> pointwise;
  std::vector<int> reranked;
};

/// Thread-safe collector; sorted() gives a deterministic order.
class DecisionLog {
 public:
  void add(DecisionRecord r);
  std::vector<DecisionRecord> sorted() const;

 private:
  mutable std::mutex mutex_;
  std::vector<DecisionRecord> records_;
};

nlohmann::json to_json(const DecisionRecord& r);

/// Serving policy of one arm. The bundle keeps a reference to `scorer`.
/// Random choices draw from streams of `seed`.
PolicyBundle make_policy(const Scorer& scorer, const ArmSpec& arm, std::uint64_t seed,
                         DecisionLog* decisions = nullptr);

/// Uniformly random E-stage order and F-stage slates; used for logging data.
PolicyBundle random_policy(std::uint64_t seed);

}  // namespace stcrank
