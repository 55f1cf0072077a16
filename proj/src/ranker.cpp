#include "stcrank/ranker.hpp"

#include "stcrank/error.hpp"

#include <algorithm>
#include <numeric>

namespace stcrank {

void EnsembleWeights::validate() const {
  if (!(vtr >= 0.0 && cvr >= 0.0 && sdr >= 0.0))
    throw InputError("ensemble weights must be non-negative");
  if (!(vtr > 0.0 || cvr > 0.0 || sdr > 0.0))
    throw InputError("at least one ensemble weight must be positive");
}

EnsembleWeights ensemble_weights_from(const Config& c, const std::string& section,
                                      const EnsembleWeights& fallback) {
  EnsembleWeights w{c.get_double(section + "/w_vtr", fallback.vtr),
                    c.get_double(section + "/w_cvr", fallback.cvr),
                    c.get_double(section + "/w_sdr", fallback.sdr)};
  try {
    w.validate();
  } catch (const InputError& e) {
    throw ConfigError(section + ": " + e.what());
  }
  return w;
}

void RankingConfig::validate() const {
  if (!(1 <= m && m <= n)) throw InputError("ranking config requires 1 <= m <= n");
  if (!(top_k >= 1 && top_k <= n)) throw InputError("ranking config requires 1 <= K <= n");
  if (!(lookahead_coefficient >= 0.0)) throw InputError("look-ahead coefficient must be non-negative");
}

double item_value(const ObjectiveScores& s, const EnsembleWeights& w) {
  return w.vtr * s.vtr() + w.cvr * s.cvr() + w.sdr * s.sdr();
}

std::vector<std::size_t> top_k_order(std::span<const double> values, std::span<const int> ids,
                                     std::size_t k) {
  if (values.size() != ids.size()) throw InputError("values and ids must have equal lengths");
  k = std::min(k, values.size());
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

namespace {

std::vector<ScoredCandidate> take_order(std::span<const ScoredCandidate> candidates,
                                        std::span<const double> values, int k) {
  if (candidates.empty()) throw InputError("ranking needs at least one candidate");
  if (k < 1 || static_cast<std::size_t>(k) > candidates.size())
    throw InputError("K must lie in [1, number of candidates]");
  std::vector<int> ids(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) ids[i] = candidates[i].item_id;
  std::vector<ScoredCandidate> out;
  out.reserve(static_cast<std::size_t>(k));
  for (auto i : top_k_order(values, ids, static_cast<std::size_t>(k))) out.push_back(candidates[i]);
  return out;
}

}  // namespace

std::vector<ScoredCandidate> rank_pointwise(std::span<const ScoredCandidate> candidates,
                                            const EnsembleWeights& weights, int k) {
  std::vector<double> values(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) values[i] = item_value(candidates[i].scores, weights);
  auto out = take_order(candidates, values, k);
  for (auto& c : out) c.item_value = item_value(c.scores, weights);
  return out;
}

std::vector<ScoredCandidate> rank_pointwise(std::span<const Candidate> candidates,
                                            const PredictorModel& model,
                                            const EnsembleWeights& weights, int k) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) scored.push_back({c.item_id, predict(model, c.features), 0.0, 0.0});
  return rank_pointwise(scored, weights, k);
}

double lookahead_value(double ctr, double sdr_star, double cvr_star) { return ctr * sdr_star * cvr_star; }

double immediate_estage_value(const ObjectiveScores& s) {
  return s[Objective::ctr] * s[Objective::cvr];
}

std::vector<ScoredCandidate> rank_estage(std::span<const ScoredCandidate> candidates,
                                         const RankingConfig& config) {
  if (!(config.lookahead_coefficient >= 0.0))
    throw InputError("look-ahead coefficient must be non-negative");
  std::vector<double> values(candidates.size());
  std::vector<double> lookahead(candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& s = candidates[i].scores;
    if (config.lookahead_enabled) {
      for (auto o : {Objective::ctr, Objective::sdr_star, Objective::cvr_star})
        if (!s.has(o))
          throw LookupError("look-ahead ranking needs the '" + std::string(name(o)) + "' score");
      lookahead[i] = lookahead_value(s[Objective::ctr], s[Objective::sdr_star], s[Objective::cvr_star]);
    }
    values[i] = immediate_estage_value(s) + config.lookahead_coefficient * lookahead[i];
  }
  auto out = take_order(candidates, values, config.top_k);
  for (auto& c : out) {
    c.item_value = immediate_estage_value(c.scores);
    c.lookahead_value = config.lookahead_enabled
                            ? lookahead_value(c.scores[Objective::ctr], c.scores[Objective::sdr_star],
                                              c.scores[Objective::cvr_star])
                            : 0.0;
  }
  return out;
}

std::vector<ScoredCandidate> rank_estage(std::span<const Candidate> candidates,
                                         const PredictorModel& model, const RankingConfig& config) {
  std::vector<Objective> heads = {Objective::ctr, Objective::cvr};
  if (config.lookahead_enabled) {
    heads.push_back(Objective::sdr_star);
    heads.push_back(Objective::cvr_star);
  }
  std::vector<ScoredCandidate> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) scored.push_back({c.item_id, predict(model, c.features, heads), 0.0, 0.0});
  return rank_estage(scored, config);
}

}  // namespace stcrank
