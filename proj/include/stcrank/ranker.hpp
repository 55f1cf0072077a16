#pragma once

#include "stcrank/config.hpp"
#include "stcrank/predictor.hpp"

#include <span>
#include <vector>

namespace stcrank {

struct EnsembleWeights {
  double vtr = 1.0;
  double cvr = 1.0;
  double sdr = 1.0;

  /// Throws InputError unless all weights are non-negative and one is positive.
  void validate() const;

  friend bool operator==(const EnsembleWeights&, const EnsembleWeights&) = default;
};

EnsembleWeights ensemble_weights_from(const Config& config, const std::string& section,
                                      const EnsembleWeights& fallback = {});

struct RankingConfig {
  int n = 50;
  int m = 5;
  int top_k = 5;
  bool lookahead_enabled = false;
  double lookahead_coefficient = 1.0;

  void validate() const;
};

struct ScoredCandidate {
  int item_id = 0;
  ObjectiveScores scores;
  double item_value = 0.0;
  double lookahead_value = 0.0;
};

/// w1 * vtr + w2 * cvr + w3 * sdr.
double item_value(const ObjectiveScores& scores, const EnsembleWeights& weights);

/// Indices of the k largest values, descending, ties by ascending id.
std::vector<std::size_t> top_k_order(std::span<const double> values, std::span<const int> ids,
                                     std::size_t k);

/// Point-wise top-k by item_value; fills item_value on the returned entries.
std::vector<ScoredCandidate> rank_pointwise(std::span<const ScoredCandidate> candidates,
                                            const EnsembleWeights& weights, int k);

struct Candidate {
  int item_id = 0;
  FeatureVector features;
};

std::vector<ScoredCandidate> rank_pointwise(std::span<const Candidate> candidates,
                                            const PredictorModel& model,
                                            const EnsembleWeights& weights, int k);

/// ctr * sdr_star * cvr_star.
double lookahead_value(double ctr, double sdr_star, double cvr_star);

/// Immediate E-stage value: post-exposure purchase probability ctr * cvr.
double immediate_estage_value(const ObjectiveScores& scores);

/// E-stage top-k by immediate value, plus coefficient * look-ahead value when
/// enabled. Candidates must carry ctr and cvr, and sdr_star and cvr_star when
/// look-ahead is on.
std::vector<ScoredCandidate> rank_estage(std::span<const ScoredCandidate> candidates,
                                         const RankingConfig& config);

std::vector<ScoredCandidate> rank_estage(std::span<const Candidate> candidates,
                                         const PredictorModel& model, const RankingConfig& config);

}  // namespace stcrank
