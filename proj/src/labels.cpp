#include "stcrank/labels.hpp"

#include "stcrank/error.hpp"

#include <cmath>

namespace stcrank {

std::string_view name(Objective o) {
  switch (o) {
    case Objective::vtr: return "vtr";
    case Objective::cvr: return "cvr";
    case Objective::sdr: return "sdr";
    case Objective::ctr: return "ctr";
    case Objective::sdr_star: return "sdr_star";
    case Objective::cvr_star: return "cvr_star";
  }
  return "?";
}

Objective objective_from(std::string_view s) {
  for (auto o : kAllObjectives)
    if (name(o) == s) return o;
  throw InputError("unknown objective '" + std::string(s) + "'");
}

VtrThreshold::VtrThreshold(double seconds) : seconds_(seconds) {
  if (!(seconds > 0.0) || !std::isfinite(seconds))
    throw InputError("vtr threshold must be a positive number of seconds");
}

LabelSpec label_spec_from(const Config& c, const std::string& section, const LabelSpec& fallback) {
  LabelSpec spec = fallback;
  try {
    spec.vtr_threshold =
        VtrThreshold(c.get_double(section + "/vtr_threshold", fallback.vtr_threshold.seconds()));
  } catch (const InputError& e) {
    throw ConfigError(section + "/vtr_threshold: " + e.what());
  }
  const auto mode = c.get_string(section + "/sdr_mode",
                                 fallback.sdr_mode == SdrMode::all_positions ? "all_positions"
                                                                             : "first_position_only");
  if (mode == "all_positions") spec.sdr_mode = SdrMode::all_positions;
  else if (mode == "first_position_only") spec.sdr_mode = SdrMode::first_position_only;
  else throw ConfigError(section + "/sdr_mode must be all_positions or first_position_only");
  spec.conflict_filter = c.get_bool(section + "/conflict_filter", fallback.conflict_filter);
  return spec;
}

int binarize_vtr(double view_time_seconds, VtrThreshold threshold) {
  if (!(view_time_seconds >= 0.0)) throw InputError("view time must be non-negative");
  return view_time_seconds > threshold.seconds() ? 1 : 0;
}

namespace {

FeatureVector slot_features(const World& world, const SessionLog& session, const SlotOutcome& slot) {
  return featurize(world, {session.user_id, slot.item_id, session.trigger_item_id, slot.position});
}

TrainingSample make_sample(FeatureVector f, Objective o, int label, double weight,
                           const SessionLog& session, int position, int item_id) {
  return {std::move(f), o, label, weight,
          {session.user_id, session.day, session.session_index, position}, item_id};
}

}  // namespace

std::vector<TrainingSample> sdr_samples(const World& world, const SessionLog& session,
                                        SdrMode mode, bool conflict_filter) {
  std::vector<TrainingSample> out;
  if (!session.estage.entered_fstage) return out;
  for (const auto& slot : session.fstage_slots) {
    if (!slot.exposed) continue;
    if (mode == SdrMode::first_position_only && slot.position != 1) continue;
    const int label = slot.swiped_down ? 1 : 0;
    const double weight = (conflict_filter && label == 0 && slot.converted) ? 0.0 : 1.0;
    out.push_back(make_sample(slot_features(world, session, slot), Objective::sdr, label, weight,
                              session, slot.position, slot.item_id));
  }
  return out;
}

int lookahead_cvr_label(const SessionLog& session) {
  int conversions = 0;
  for (const auto& slot : session.fstage_slots) conversions += slot.converted ? 1 : 0;
  return conversions > 0 ? 1 : 0;
}

std::vector<TrainingSample> build_training_set(const World& world,
                                               std::span<const SessionLog> logs,
                                               const LabelSpec& spec) {
  if (logs.empty()) throw InputError("build_training_set needs at least one session");
  std::vector<TrainingSample> out;
  for (const auto& session : logs) {
    const auto& e = session.estage;
    for (int item : e.impressions) {
      const int clicked = (e.clicked && item == session.trigger_item_id) ? 1 : 0;
      out.push_back(make_sample(featurize(world, {session.user_id, item}), Objective::ctr, clicked,
                                1.0, session, 0, item));
    }
    if (e.clicked) {
      auto f = featurize(world, {session.user_id, session.trigger_item_id});
      out.push_back(make_sample(f, Objective::sdr_star, e.entered_fstage ? 1 : 0, 1.0, session, 0,
                                session.trigger_item_id));
      if (e.entered_fstage)
        out.push_back(make_sample(std::move(f), Objective::cvr_star, lookahead_cvr_label(session),
                                  1.0, session, 0, session.trigger_item_id));
    }
    if (!e.entered_fstage) continue;
    for (const auto& slot : session.fstage_slots) {
      if (!slot.exposed) continue;
      auto f = slot_features(world, session, slot);
      out.push_back(make_sample(f, Objective::cvr, slot.converted ? 1 : 0, 1.0, session,
                                slot.position, slot.item_id));
      out.push_back(make_sample(std::move(f), Objective::vtr,
                                binarize_vtr(slot.view_time_seconds, spec.vtr_threshold), 1.0,
                                session, slot.position, slot.item_id));
    }
    auto sdr = sdr_samples(world, session, spec.sdr_mode, spec.conflict_filter);
    std::move(sdr.begin(), sdr.end(), std::back_inserter(out));
  }
  return out;
}

nlohmann::json to_json(const TrainingSample& s) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& x : s.features) f.push_back({x.id, x.value});
  return {{"v", 1},
          {"obj", name(s.objective)},
          {"y", s.label},
          {"z", s.weight},
          {"item", s.item_id},
          {"src", {s.source.user_id, s.source.day, s.source.session_index, s.source.position}},
          {"f", f}};
}

TrainingSample sample_from_json(const nlohmann::json& j) {
  try {
    TrainingSample s;
    s.objective = objective_from(j.at("obj").get<std::string>());
    s.label = j.at("y");
    s.weight = j.at("z");
    s.item_id = j.at("item");
    const auto& src = j.at("src");
    s.source = {src.at(0), src.at(1), src.at(2), src.at(3)};
    for (const auto& x : j.at("f")) s.features.push_back({x.at(0), x.at(1)});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed training sample: ") + e.what());
  }
}

}  // namespace stcrank
