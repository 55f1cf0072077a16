#pragma once

#include "stcrank/config.hpp"
#include "stcrank/labels.hpp"
#include "stcrank/predictor.hpp"
#include "stcrank/ranker.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stcrank {

/// Predicted F-stage scores and labels for the three ensemble objectives,
/// one row per labelled sample. Rows of one objective may carry weight 0
/// (filtered or unselected sdr samples).
struct ValidationSet {
  std::array<std::vector<double>, 3> predicted;  // vtr, cvr, sdr
  std::array<std::vector<int>, 3> labels;
  std::array<std::vector<double>, 3> weights;

  std::size_t size() const { return predicted[0].size(); }
  void add(const ObjectiveScores& scores, int y_vtr, int y_cvr, int y_sdr, double sdr_weight,
           double vtr_weight = 1.0, double cvr_weight = 1.0);
  /// Throws DegenerateError naming the first objective without both classes.
  void check() const;
};

/// One row per exposed F-stage slot of `logs`, labelled as `spec` prescribes.
ValidationSet build_validation_set(const World& world, std::span<const SessionLog> logs,
                                   const PredictorModel& model, const LabelSpec& spec);

/// Sum over vtr, cvr and sdr of AUC(v_w, labels of that objective), where v_w
/// is the ensemble value of the predicted scores. Lies in [0, 3].
double tune_objective(const EnsembleWeights& weights, const ValidationSet& validation);

enum class TuneMethod { random, coordinate, bayes_like };
TuneMethod tune_method_from(const std::string& s);

struct Box {
  double lo = 0.0;
  double hi = 2.0;
};

struct TuneSpec {
  Box w_vtr;
  Box w_cvr;
  Box w_sdr;
  Box alpha{0.0, 2.0};
  bool tune_alpha = false;
  int budget = 50;
  TuneMethod method = TuneMethod::random;
  std::uint64_t seed = 0;

  /// Throws InputError unless lo < hi and budget >= 1.
  void validate() const;
};

TuneSpec tune_spec_from(const Config& config, const std::string& section, const TuneSpec& fallback = {});

struct TunePoint {
  EnsembleWeights weights;
  double alpha = 1.0;
};

struct TuneProbe {
  TunePoint point;  // as probed, not normalized
  double objective = 0.0;
};

struct TuneResult {
  EnsembleWeights best_weights;  // normalized to sum to 1
  double best_alpha = 1.0;
  TunePoint best_raw;
  double best_objective = 0.0;
  double default_objective = 0.0;  // probe #1
  std::vector<TuneProbe> trace;
};

/// The default point (1, 1, 1, alpha 1) clamped into the box; always probe #1.
TunePoint default_probe(const TuneSpec& spec);

/// Deterministic given spec.seed. Each probe depends only on the seed and the
/// probes before it, so a larger budget extends the trace of a smaller one.
TuneResult tune(const TuneSpec& spec, const ValidationSet& validation, int jobs = 1);

EnsembleWeights normalized(const EnsembleWeights& w);

nlohmann::json to_json(const TuneProbe& p);
nlohmann::json to_json(const TuneResult& r);

}  // namespace stcrank
