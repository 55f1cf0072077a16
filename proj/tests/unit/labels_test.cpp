#include <gtest/gtest.h>

#include "stcrank/error.hpp"
#include "stcrank/labels.hpp"
#include "stcrank/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace stcrank;

namespace {

World small_world() {
  WorldConfig c;
  c.users = 20;
  c.categories = 2;
  c.items_per_category = 10;
  return generate_world(c, 7);
}

SlotOutcome slot(int pos, int item, double t, bool conv, bool swiped, bool exposed = true) {
  SlotOutcome s;
  s.position = pos;
  s.item_id = item;
  s.view_time_seconds = t;
  s.converted = conv;
  s.swiped_down = swiped;
  s.exposed = exposed;
  return s;
}

// E-click on item 0, F entry, 4 exposed slots with the exit at slot 4 and a
// fifth unexposed slot.
SessionLog four_slot_session(bool convert_at_exit) {
  SessionLog s;
  s.user_id = 3;
  s.day = 2;
  s.trigger_item_id = 0;
  s.estage.impressions = {5, 0};
  s.estage.clicked = true;
  s.estage.entered_fstage = true;
  s.fstage_slots = {slot(1, 1, 1.0, false, true), slot(2, 2, 3.0, false, true),
                    slot(3, 3, 10.0, false, true), slot(4, 4, 30.0, convert_at_exit, false),
                    slot(5, 6, 0.0, false, false, false)};
  s.exited_at = 4;
  return s;
}

std::vector<int> labels_of(const std::vector<TrainingSample>& v) {
  std::vector<int> out;
  for (const auto& s : v) out.push_back(s.label);
  return out;
}

std::vector<double> weights_of(const std::vector<TrainingSample>& v) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(s.weight);
  return out;
}

std::map<Objective, int> counts(const std::vector<TrainingSample>& v) {
  std::map<Objective, int> c;
  for (const auto& s : v) ++c[s.objective];
  return c;
}

std::vector<int> take_first(const FStageRequest& r) {
  return {r.candidates.begin(), r.candidates.begin() + r.slate_size};
}

PolicyBundle passthrough_policy() {
  return {[](int, std::span<const int> c, int len) { return std::vector<int>(c.begin(), c.begin() + len); },
          take_first};
}

}  // namespace

TEST(BinarizeVtr, Thresholds) {
  EXPECT_EQ(binarize_vtr(30, VtrThreshold(25)), 1);
  EXPECT_EQ(binarize_vtr(5, VtrThreshold(5)), 0);
  EXPECT_EQ(binarize_vtr(6, VtrThreshold(5)), 1);
  EXPECT_EQ(binarize_vtr(0, VtrThreshold(2)), 0);
}

TEST(BinarizeVtr, RejectsBadInput) {
  EXPECT_THROW(binarize_vtr(-1, VtrThreshold(5)), InputError);
  EXPECT_THROW(VtrThreshold(0), InputError);
  EXPECT_THROW(VtrThreshold(-3), InputError);
}

TEST(BinarizeVtr, MonotoneInTimeAntitoneInThreshold) {
  const std::vector<double> grid = {0, 0.5, 2, 2.0001, 5, 7, 25, 26, 100};
  for (double th : {2.0, 5.0, 25.0})
    for (std::size_t i = 1; i < grid.size(); ++i)
      EXPECT_GE(binarize_vtr(grid[i], VtrThreshold(th)), binarize_vtr(grid[i - 1], VtrThreshold(th)));
  for (double t : grid)
    EXPECT_GE(binarize_vtr(t, VtrThreshold(2)), binarize_vtr(t, VtrThreshold(5)));
}

TEST(SdrSamples, AllPositionsNoFilter) {
  const auto w = small_world();
  const auto out = sdr_samples(w, four_slot_session(false), SdrMode::all_positions, false);
  EXPECT_EQ(labels_of(out), (std::vector<int>{1, 1, 1, 0}));
  EXPECT_EQ(weights_of(out), (std::vector<double>{1, 1, 1, 1}));
}

TEST(SdrSamples, FilterZeroesConvertingExit) {
  const auto w = small_world();
  const auto out = sdr_samples(w, four_slot_session(true), SdrMode::all_positions, true);
  EXPECT_EQ(labels_of(out), (std::vector<int>{1, 1, 1, 0}));
  EXPECT_EQ(weights_of(out), (std::vector<double>{1, 1, 1, 0}));
}

TEST(SdrSamples, FilterIgnoresNonConvertingExit) {
  const auto w = small_world();
  const auto out = sdr_samples(w, four_slot_session(false), SdrMode::all_positions, true);
  EXPECT_EQ(weights_of(out), (std::vector<double>{1, 1, 1, 1}));
}

TEST(SdrSamples, FirstPositionOnly) {
  const auto w = small_world();
  for (bool conv : {false, true}) {
    const auto out = sdr_samples(w, four_slot_session(conv), SdrMode::first_position_only, conv);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].source.position, 1);
  }
}

TEST(SdrSamples, NoFstageNoSamples) {
  const auto w = small_world();
  auto s = four_slot_session(false);
  s.estage.entered_fstage = false;
  s.fstage_slots.clear();
  EXPECT_TRUE(sdr_samples(w, s, SdrMode::all_positions, false).empty());
}

TEST(LookaheadLabel, Cases) {
  auto s = four_slot_session(false);
  EXPECT_EQ(lookahead_cvr_label(s), 0);
  s.fstage_slots[1].converted = true;
  s.fstage_slots[3].converted = true;
  EXPECT_EQ(lookahead_cvr_label(s), 1);
  SessionLog none;
  EXPECT_EQ(lookahead_cvr_label(none), 0);
}

TEST(BuildTrainingSet, CountingContract) {
  const auto w = small_world();
  SessionLog s = four_slot_session(false);
  s.estage.impressions = {0};
  s.fstage_slots.resize(3);
  s.fstage_slots[2].swiped_down = false;
  s.exited_at = 3;
  std::vector<SessionLog> logs = {s};
  for (auto mode : {SdrMode::all_positions, SdrMode::first_position_only}) {
    const auto c = counts(build_training_set(w, logs, {VtrThreshold(5), mode, false}));
    EXPECT_EQ(c.at(Objective::ctr), 1);
    EXPECT_EQ(c.at(Objective::sdr_star), 1);
    EXPECT_EQ(c.at(Objective::cvr_star), 1);
    EXPECT_EQ(c.at(Objective::cvr), 3);
    EXPECT_EQ(c.at(Objective::vtr), 3);
    EXPECT_EQ(c.at(Objective::sdr), mode == SdrMode::all_positions ? 3 : 1);
  }
}

TEST(BuildTrainingSet, NoEntriesNoFstageSamples) {
  const auto w = small_world();
  SessionLog a;
  a.user_id = 1;
  a.estage.impressions = {1, 2, 3};
  SessionLog b = a;
  b.estage.clicked = true;
  b.trigger_item_id = 3;
  std::vector<SessionLog> logs = {a, b};
  auto c = counts(build_training_set(w, logs, {}));
  EXPECT_EQ(c[Objective::ctr], 6);
  EXPECT_EQ(c[Objective::sdr_star], 1);
  for (auto o : {Objective::cvr_star, Objective::cvr, Objective::vtr, Objective::sdr})
    EXPECT_EQ(c[o], 0);
}

TEST(BuildTrainingSet, EmptyLogsRejected) {
  const auto w = small_world();
  EXPECT_THROW(build_training_set(w, std::span<const SessionLog>{}, {}), InputError);
}

TEST(BuildTrainingSet, FilterChangesWeightsNotLabels) {
  WorldConfig c;
  c.users = 100;
  const auto w = generate_world(c, 11);
  std::vector<SessionLog> logs;
  for (const auto& d : simulate_days(w, passthrough_policy(), 1, 2, 99)) logs.insert(logs.end(), d.logs.begin(), d.logs.end());
  const auto off = build_training_set(w, logs, {VtrThreshold(5), SdrMode::all_positions, false});
  const auto on = build_training_set(w, logs, {VtrThreshold(5), SdrMode::all_positions, true});
  ASSERT_EQ(off.size(), on.size());
  int zeroed = 0;
  for (std::size_t i = 0; i < off.size(); ++i) {
    ASSERT_EQ(off[i].label, on[i].label);
    ASSERT_EQ(off[i].features, on[i].features);
    ASSERT_EQ(off[i].objective, on[i].objective);
    if (on[i].weight == 0.0) {
      ++zeroed;
      EXPECT_EQ(on[i].objective, Objective::sdr);
      EXPECT_EQ(on[i].label, 0);
    }
  }
  EXPECT_GT(zeroed, 0);
}

TEST(BuildTrainingSet, FirstPositionIsSubsetOfAll) {
  WorldConfig c;
  c.users = 60;
  const auto w = generate_world(c, 12);
  const auto days = simulate_days(w, passthrough_policy(), 1, 1, 5);
  const auto& logs = days[0].logs;
  for (const auto& s : logs) {
    if (!s.estage.entered_fstage) continue;
    const auto all = sdr_samples(w, s, SdrMode::all_positions, false);
    const auto first = sdr_samples(w, s, SdrMode::first_position_only, false);
    for (const auto& f : first) {
      const bool found = std::any_of(all.begin(), all.end(), [&](const TrainingSample& a) {
        return a.source == f.source && a.label == f.label && a.features == f.features;
      });
      EXPECT_TRUE(found);
    }
  }
}

TEST(LookaheadLabel, MeanEqualsSessionConversionRate) {
  WorldConfig c;
  c.users = 150;
  const auto w = generate_world(c, 13);
  std::vector<SessionLog> logs;
  for (const auto& d : simulate_days(w, passthrough_policy(), 1, 3, 17)) logs.insert(logs.end(), d.logs.begin(), d.logs.end());
  int entries = 0, converting = 0;
  for (const auto& s : logs) {
    if (!s.estage.entered_fstage) continue;
    ++entries;
    bool any = false;
    for (const auto& sl : s.fstage_slots) any = any || (sl.exposed && sl.converted);
    converting += any;
  }
  const auto samples = build_training_set(w, logs, {});
  int n = 0, pos = 0;
  for (const auto& s : samples)
    if (s.objective == Objective::cvr_star) ++n, pos += s.label;
  EXPECT_EQ(n, entries);
  EXPECT_EQ(pos, converting);
}

// Empirical positive rate per objective against the sum of ground-truth
// probabilities for the same exposures.
TEST(BuildTrainingSet, PositiveRatesMatchGroundTruth) {
  WorldConfig c;
  c.users = 1000;
  c.session.sessions_per_active_user = 3;
  const auto w = generate_world(c, 21);
  std::vector<SessionLog> logs;
  for (const auto& d : simulate_days(w, passthrough_policy(), 1, 6, 23))
    logs.insert(logs.end(), d.logs.begin(), d.logs.end());
  ASSERT_GE(logs.size(), 10000u);

  const double threshold = 5.0;
  struct Tally { double observed = 0, expected = 0, variance = 0; };
  std::map<Objective, Tally> t;
  auto add = [&](Objective o, int y, double p) {
    t[o].observed += y;
    t[o].expected += p;
    t[o].variance += p * (1 - p);
  };
  for (const auto& s : logs) {
    for (int item : s.estage.impressions)
      add(Objective::ctr, s.estage.clicked && item == s.trigger_item_id,
          true_scores(w, s.user_id, item).ctr);
    if (!s.estage.clicked) continue;
    add(Objective::sdr_star, s.estage.entered_fstage, true_scores(w, s.user_id, s.trigger_item_id).sdr_star);
    if (!s.estage.entered_fstage) continue;
    std::vector<int> views(w.categories.size(), 0);
    views[w.item(s.trigger_item_id).category_id] = 1;
    for (const auto& sl : s.fstage_slots) {
      if (!sl.exposed) continue;
      const int cat = w.item(sl.item_id).category_id;
      const auto truth = true_scores(w, s.user_id, sl.item_id, {views[cat]});
      ++views[cat];
      add(Objective::cvr, sl.converted, truth.cvr);
      add(Objective::vtr, binarize_vtr(sl.view_time_seconds, VtrThreshold(threshold)), truth.vtr(threshold));
      add(Objective::sdr, sl.swiped_down, truth.sdr);
    }
  }
  const auto samples = build_training_set(w, logs, {VtrThreshold(threshold), SdrMode::all_positions, false});
  std::map<Objective, double> positives;
  for (const auto& s : samples) positives[s.objective] += s.label;
  for (auto o : {Objective::ctr, Objective::sdr_star, Objective::cvr, Objective::vtr, Objective::sdr}) {
    const auto& x = t[o];
    EXPECT_EQ(positives[o], x.observed) << name(o);
    EXPECT_LE(std::abs(x.observed - x.expected), 3 * std::sqrt(x.variance))
        << name(o) << " observed " << x.observed << " expected " << x.expected;
  }
}

TEST(TrainingSample, JsonRoundTrip) {
  const auto w = small_world();
  const auto out = sdr_samples(w, four_slot_session(true), SdrMode::all_positions, true);
  for (const auto& s : out) {
    const auto back = sample_from_json(to_json(s));
    EXPECT_EQ(back.features, s.features);
    EXPECT_EQ(back.label, s.label);
    EXPECT_EQ(back.weight, s.weight);
    EXPECT_EQ(back.source, s.source);
    EXPECT_EQ(back.objective, s.objective);
  }
}

TEST(LabelSpec, FromConfig) {
  const auto c = Config::from_string("[labels]\nvtr_threshold = 2\nsdr_mode = first_position_only\nconflict_filter = true\n");
  const auto spec = label_spec_from(c, "labels");
  EXPECT_EQ(spec.vtr_threshold.seconds(), 2.0);
  EXPECT_EQ(spec.sdr_mode, SdrMode::first_position_only);
  EXPECT_TRUE(spec.conflict_filter);
  EXPECT_THROW(label_spec_from(Config::from_string("[l]\nsdr_mode = some\n"), "l"), ConfigError);
  EXPECT_THROW(label_spec_from(Config::from_string("[l]\nvtr_threshold = 0\n"), "l"), ConfigError);
}
