#include "stcrank/policy.hpp"

#include "stcrank/error.hpp"
#include "stcrank/reranker.hpp"
#include "stcrank/rng.hpp"

#include <algorithm>

namespace stcrank {

ObjectiveScores ModelScorer::fstage(int user_id, int item_id, int trigger_item_id) const {
  return predict(model_, featurize(world_, {user_id, item_id, trigger_item_id, 1}));
}

ObjectiveScores ModelScorer::estage(int user_id, int item_id, bool lookahead) const {
  const auto f = featurize(world_, {user_id, item_id});
  ObjectiveScores s;
  s.set(Objective::ctr, predict(model_, Objective::ctr, f));
  s.set(Objective::cvr, predict(model_, Objective::cvr, f));
  if (lookahead) {
    s.set(Objective::sdr_star, predict(model_, Objective::sdr_star, f));
    s.set(Objective::cvr_star, predict(model_, Objective::cvr_star, f));
  }
  return s;
}

ObjectiveScores OracleScorer::fstage(int user_id, int item_id, int trigger_item_id) const {
  const bool same = world_.item(item_id).category_id == world_.item(trigger_item_id).category_id;
  const auto t = true_scores(world_, user_id, item_id, {same ? 1 : 0});
  return {t.vtr(vtr_threshold_), t.cvr, t.sdr};
}

ObjectiveScores OracleScorer::estage(int user_id, int item_id, bool lookahead) const {
  const auto t = true_scores(world_, user_id, item_id);
  ObjectiveScores s;
  s.set(Objective::ctr, t.ctr);
  s.set(Objective::cvr, t.cvr);
  if (lookahead) {
    s.set(Objective::sdr_star, t.sdr_star);
    s.set(Objective::cvr_star, lookahead_conversion_truth(world_, user_id, item_id));
  }
  return s;
}

FStagePolicy fstage_policy_from(const std::string& s) {
  if (s == "pointwise") return FStagePolicy::pointwise;
  if (s == "beam") return FStagePolicy::beam;
  if (s == "random") return FStagePolicy::random;
  throw ConfigError("unknown F-stage policy '" + s + "'");
}

EStagePolicy estage_policy_from(const std::string& s) {
  if (s == "immediate") return EStagePolicy::immediate;
  if (s == "lookahead") return EStagePolicy::lookahead;
  if (s == "random") return EStagePolicy::random;
  throw ConfigError("unknown E-stage policy '" + s + "'");
}

std::string to_string(FStagePolicy p) {
  switch (p) {
    case FStagePolicy::pointwise: return "pointwise";
    case FStagePolicy::beam: return "beam";
    case FStagePolicy::random: return "random";
  }
  return "";
}

std::string to_string(EStagePolicy p) {
  switch (p) {
    case EStagePolicy::immediate: return "immediate";
    case EStagePolicy::lookahead: return "lookahead";
    case EStagePolicy::random: return "random";
  }
  return "";
}

std::vector<std::string> declared_arms(const Config& config) { return config.subsections("arm"); }

ArmSpec arm_spec_from(const Config& c, const std::string& name) {
  const auto arms = declared_arms(c);
  if (std::find(arms.begin(), arms.end(), name) == arms.end())
    throw ConfigError("unknown arm '" + name + "'");
  const std::string s = "arm." + name;
  ArmSpec arm;
  arm.name = name;
  arm.labels = label_spec_from(c, s, label_spec_from(c, "labels"));
  arm.weights = ensemble_weights_from(c, s, ensemble_weights_from(c, "ensemble"));
  arm.fstage = fstage_policy_from(c.get_string(s + "/fstage", c.get_string("ranking/fstage", "pointwise")));
  arm.estage = estage_policy_from(c.get_string(s + "/estage", c.get_string("ranking/estage", "immediate")));
  arm.alpha = c.get_double(s + "/alpha", c.get_double("ranking/alpha", 1.0));
  arm.beam_width = static_cast<int>(c.get_int(s + "/beam_width", c.get_int("beam/beam_width", 25)));
  arm.oracle = c.get_bool(s + "/oracle", c.get_bool("ranking/oracle", false));
  arm.tune = c.get_bool(s + "/tune", false);
  if (!(arm.alpha >= 0.0)) throw ConfigError(s + "/alpha must be non-negative");
  if (arm.beam_width < 1) throw ConfigError(s + "/beam_width must be at least 1");
  return arm;
}

nlohmann::json to_json(const ArmSpec& a) {
  return {{"name", a.name},
          {"vtr_threshold", a.labels.vtr_threshold.seconds()},
          {"sdr_mode", a.labels.sdr_mode == SdrMode::all_positions ? "all_positions" : "first_position_only"},
          {"conflict_filter", a.labels.conflict_filter},
          {"w_vtr", a.weights.vtr},
          {"w_cvr", a.weights.cvr},
          {"w_sdr", a.weights.sdr},
          {"fstage", to_string(a.fstage)},
          {"estage", to_string(a.estage)},
          {"alpha", a.alpha},
          {"beam_width", a.beam_width},
          {"oracle", a.oracle},
          {"tune", a.tune}};
}

void DecisionLog::add(DecisionRecord r) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(r));
}

std::vector<DecisionRecord> DecisionLog::sorted() const {
  std::lock_guard lock(mutex_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const DecisionRecord& a, const DecisionRecord& b) {
    return std::tie(a.day, a.user_id, a.session_index, a.page) <
           std::tie(b.day, b.user_id, b.session_index, b.page);
  });
  return out;
}

nlohmann::json to_json(const DecisionRecord& r) {
  return {{"v", 1},        {"user", r.user_id},         {"day", r.day},          {"session", r.session_index},
          {"page", r.page}, {"pointwise", r.pointwise}, {"reranked", r.reranked}};
}

namespace {

std::vector<int> shuffled_prefix(std::span<const int> items, std::size_t k, std::uint64_t stream) {
  std::vector<int> pool(items.begin(), items.end());
  Rng rng(stream);
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(k);
  return pool;
}

std::uint64_t request_stream(std::uint64_t seed, const FStageRequest& r) {
  return stream_key({seed, tag("fstage.random"), static_cast<std::uint64_t>(r.user_id),
                     static_cast<std::uint64_t>(r.day), static_cast<std::uint64_t>(r.session_index),
                     static_cast<std::uint64_t>(r.page)});
}

std::uint64_t estage_stream(std::uint64_t seed, int user_id, std::span<const int> candidates) {
  // The candidate list identifies the session within a day.
  std::uint64_t h = stream_key({seed, tag("estage.random"), static_cast<std::uint64_t>(user_id)});
  for (int c : candidates) h = stream_key({h, static_cast<std::uint64_t>(c)});
  return h;
}

std::vector<int> ids_of(std::span<const ScoredCandidate> c) {
  std::vector<int> out;
  out.reserve(c.size());
  for (const auto& x : c) out.push_back(x.item_id);
  return out;
}

}  // namespace

PolicyBundle random_policy(std::uint64_t seed) {
  PolicyBundle p;
  p.estage = [seed](int user_id, std::span<const int> candidates, int list_length) {
    return shuffled_prefix(candidates, static_cast<std::size_t>(list_length),
                           estage_stream(seed, user_id, candidates));
  };
  p.fstage = [seed](const FStageRequest& r) {
    return shuffled_prefix(r.candidates, static_cast<std::size_t>(r.slate_size), request_stream(seed, r));
  };
  return p;
}

PolicyBundle make_policy(const Scorer& scorer, const ArmSpec& arm, std::uint64_t seed,
                         DecisionLog* decisions) {
  const auto random = random_policy(seed);
  PolicyBundle p;

  if (arm.estage == EStagePolicy::random) {
    p.estage = random.estage;
  } else {
    const bool lookahead = arm.estage == EStagePolicy::lookahead;
    const double alpha = arm.alpha;
    p.estage = [&scorer, lookahead, alpha](int user_id, std::span<const int> candidates, int list_length) {
      std::vector<ScoredCandidate> scored;
      scored.reserve(candidates.size());
      for (int id : candidates) scored.push_back({id, scorer.estage(user_id, id, lookahead), 0.0, 0.0});
      RankingConfig rc;
      rc.n = static_cast<int>(candidates.size());
      rc.m = std::min(list_length, rc.n);
      rc.top_k = list_length;
      rc.lookahead_enabled = lookahead;
      rc.lookahead_coefficient = alpha;
      return ids_of(rank_estage(scored, rc));
    };
  }

  if (arm.fstage == FStagePolicy::random) {
    p.fstage = random.fstage;
  } else {
    const bool beam = arm.fstage == FStagePolicy::beam;
    const EnsembleWeights weights = arm.weights;
    const int width = arm.beam_width;
    p.fstage = [&scorer, beam, weights, width, decisions](const FStageRequest& r) {
      std::vector<ScoredCandidate> scored;
      scored.reserve(r.candidates.size());
      for (int id : r.candidates)
        scored.push_back({id, scorer.fstage(r.user_id, id, r.trigger_item_id), 0.0, 0.0});
      auto pointwise = ids_of(rank_pointwise(scored, weights, r.slate_size));
      if (!beam) return pointwise;
      auto reranked = beam_search(scored, {width, r.slate_size}, weights).permutation;
      if (decisions)
        decisions->add({r.user_id, r.day, r.session_index, r.page, std::move(pointwise), reranked});
      return reranked;
    };
  }
  return p;
}

}  // namespace stcrank
