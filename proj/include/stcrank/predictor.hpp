#pragma once

#include "stcrank/features.hpp"
#include "stcrank/labels.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace stcrank {

/// Predicted probabilities for the objectives a caller asked for.
class ObjectiveScores {
 public:
  ObjectiveScores() = default;
  ObjectiveScores(double vtr, double cvr, double sdr);

  bool has(Objective o) const { return (present_ >> index(o)) & 1u; }

  /// Throws LookupError naming the objective if it was never set.
  double operator[](Objective o) const;

  /// Throws InputError if p is outside [0, 1].
  ObjectiveScores& set(Objective o, double p);

  double vtr() const { return (*this)[Objective::vtr]; }
  double cvr() const { return (*this)[Objective::cvr]; }
  double sdr() const { return (*this)[Objective::sdr]; }

 private:
  static unsigned index(Objective o) { return static_cast<unsigned>(o); }

  std::array<double, 6> value_{};
  std::uint8_t present_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 4;
  double l2 = 1e-5;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

TrainConfig train_config_from(const Config& config, const std::string& section,
                              const TrainConfig& fallback = {});

/// One logistic head: bias plus a dense weight table over hashed features.
struct LogisticHead {
  double bias = 0.0;
  std::vector<double> weights = std::vector<double>(kFeatureTableSize, 0.0);

  double logit(const FeatureVector& f) const;
  double predict(const FeatureVector& f) const;

  friend bool operator==(const LogisticHead&, const LogisticHead&) = default;
};

class PredictorModel {
 public:
  bool has(Objective o) const { return heads_[static_cast<int>(o)].has_value(); }

  /// Throws LookupError naming the objective if the head is missing.
  const LogisticHead& head(Objective o) const;
  LogisticHead& head(Objective o);
  void set_head(Objective o, LogisticHead h) { heads_[static_cast<int>(o)] = std::move(h); }

  /// An all-zero head for every objective (predicts 0.5 everywhere).
  static PredictorModel zeros(std::span<const Objective> objectives = kAllObjectives);

  TrainConfig hyper;
  std::uint64_t seed = 0;

  friend bool operator==(const PredictorModel&, const PredictorModel&) = default;

 private:
  std::array<std::optional<LogisticHead>, 6> heads_;
};

struct EpochMetric {
  Objective objective;
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t samples = 0;
};

/// Weighted-BCE SGD per head. Zero-weight samples are dropped before the
/// shuffle, so they leave the trained model bit-identical.
PredictorModel train(std::span<const TrainingSample> samples, const TrainConfig& hyper,
                     std::uint64_t seed, std::vector<EpochMetric>* metrics = nullptr);

/// sum_i z_i * BCE(y_i, sigmoid(logit_i)) over samples of one objective.
double weighted_bce_loss(const LogisticHead& head, std::span<const TrainingSample> samples);

struct HeadGradient {
  double bias = 0.0;
  std::unordered_map<std::uint32_t, double> weights;
};

/// Analytic gradient of weighted_bce_loss.
HeadGradient weighted_bce_gradient(const LogisticHead& head, std::span<const TrainingSample> samples);

double predict(const PredictorModel& model, Objective objective, const FeatureVector& features);

ObjectiveScores predict(const PredictorModel& model, const FeatureVector& features,
                        std::span<const Objective> objectives = kFStageObjectives);

/// Weighted probability that a random positive outscores a random negative,
/// ties credited 0.5. Throws DegenerateError without both classes.
double auc(std::span<const double> scores, std::span<const int> labels,
           std::span<const double> weights = {});

/// Same as auc() with the score order precomputed (ascending by score).
double auc_presorted(std::span<const double> scores, std::span<const int> labels,
                     std::span<const double> weights, std::span<const std::uint32_t> order);

enum class ModelFormat { binary, json };

ModelFormat model_format_from(const std::string& s);

void save_model(const PredictorModel& model, const std::filesystem::path& path, ModelFormat format);

/// Detects the format from the file's leading bytes.
PredictorModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const PredictorModel& model);
PredictorModel model_from_json(const nlohmann::json& j);

std::string to_binary(const PredictorModel& model);
PredictorModel model_from_binary(const std::string& bytes);

}  // namespace stcrank
