#include "stcrank/worldsim.hpp"

#include "stcrank/error.hpp"
#include "stcrank/parallel.hpp"
#include "stcrank/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stcrank {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double draw(Rng& rng, const Range& r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

Range read_range(const Config& c, const std::string& key, Range fallback) {
  auto v = c.get_doubles(key, {fallback.lo, fallback.hi});
  if (v.size() == 1) return {v[0], v[0]};
  if (v.size() != 2) throw ConfigError("key '" + key + "' expects [lo, hi]");
  return {v[0], v[1]};
}

void check_probability_range(const Range& r, const std::string& name) {
  if (r.lo < 0.0 || r.hi > 1.0 || r.lo > r.hi)
    throw ConfigError(name + " must be a sub-range of [0, 1]");
}

void check_probability(double p, const std::string& name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(name + " must lie in [0, 1]");
}

void check_positive_beta(const Range& r, const std::string& name) {
  if (!(r.lo > 0.0 && r.hi > 0.0)) throw ConfigError(name + " Beta parameters must be positive");
}

// Partial Fisher-Yates: k distinct elements of `pool`, in draw order.
std::vector<int> sample_without_replacement(std::vector<int> pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

const char* involvement_name(Involvement v) {
  return v == Involvement::high_involvement ? "high_involvement" : "standard";
}

Involvement involvement_from(const std::string& s) {
  if (s == "high_involvement") return Involvement::high_involvement;
  if (s == "standard") return Involvement::standard;
  throw InputError("unknown involvement '" + s + "'");
}

}  // namespace

WorldConfig world_config_from(const Config& c) {
  WorldConfig w;
  w.users = static_cast<int>(c.get_int("world/users", w.users));
  w.categories = static_cast<int>(c.get_int("world/categories", w.categories));
  w.items_per_category = static_cast<int>(c.get_int("world/items_per_category", w.items_per_category));
  w.day_count = static_cast<int>(c.get_int("world/day_count", w.day_count));
  w.high_involvement_fraction = c.get_double("world/high_involvement_fraction", w.high_involvement_fraction);
  w.comparison_bonus = c.get_double("world/comparison_bonus", w.comparison_bonus);
  w.comparison_bonus_cap = c.get_double("world/comparison_bonus_cap", w.comparison_bonus_cap);
  w.affinity_beta = read_range(c, "world/affinity_beta", w.affinity_beta);
  w.patience_beta = read_range(c, "world/patience_beta", w.patience_beta);
  w.return_propensity_beta = read_range(c, "world/return_propensity_beta", w.return_propensity_beta);
  w.quality_beta = read_range(c, "world/quality_beta", w.quality_beta);
  w.appeal_beta = read_range(c, "world/appeal_beta", w.appeal_beta);

  auto& r = w.ranges;
  const std::string s = "world.ranges/";
  r.base_cvr = read_range(c, s + "base_cvr", r.base_cvr);
  r.cvr_gain = read_range(c, s + "cvr_gain", r.cvr_gain);
  r.view_time_mu = read_range(c, s + "view_time_mu", r.view_time_mu);
  r.view_time_sigma = read_range(c, s + "view_time_sigma", r.view_time_sigma);
  r.appeal_view_gain = read_range(c, s + "appeal_view_gain", r.appeal_view_gain);
  r.conversion_view_shift = read_range(c, s + "conversion_view_shift", r.conversion_view_shift);
  r.exit_after_conversion = read_range(c, s + "exit_after_conversion", r.exit_after_conversion);
  r.exit_without_conversion = read_range(c, s + "exit_without_conversion", r.exit_without_conversion);
  r.ctr_base = read_range(c, s + "ctr_base", r.ctr_base);
  r.sdr_star_base = read_range(c, s + "sdr_star_base", r.sdr_star_base);

  auto& b = w.behavior;
  b.affinity_view_gain = c.get_double("behavior/affinity_view_gain", b.affinity_view_gain);
  b.patience_exit_gain = c.get_double("behavior/patience_exit_gain", b.patience_exit_gain);
  b.appeal_exit_gain = c.get_double("behavior/appeal_exit_gain", b.appeal_exit_gain);
  b.ctr_affinity_gain = c.get_double("behavior/ctr_affinity_gain", b.ctr_affinity_gain);
  b.ctr_appeal_gain = c.get_double("behavior/ctr_appeal_gain", b.ctr_appeal_gain);
  b.sdr_star_affinity_gain = c.get_double("behavior/sdr_star_affinity_gain", b.sdr_star_affinity_gain);

  auto& ss = w.session;
  ss.estage_candidates = static_cast<int>(c.get_int("session/estage_candidates", ss.estage_candidates));
  ss.estage_list_length = static_cast<int>(c.get_int("session/estage_list_length", ss.estage_list_length));
  ss.fstage_candidates = static_cast<int>(c.get_int("session/fstage_candidates", ss.fstage_candidates));
  ss.slate_size = static_cast<int>(c.get_int("session/slate_size", ss.slate_size));
  ss.max_pages = static_cast<int>(c.get_int("session/max_pages", ss.max_pages));
  ss.same_category_fraction = c.get_double("session/same_category_fraction", ss.same_category_fraction);
  ss.sessions_per_active_user =
      static_cast<int>(c.get_int("session/sessions_per_active_user", ss.sessions_per_active_user));
  ss.dau_beta = c.get_double("session/dau_beta", ss.dau_beta);
  ss.satisfaction_ipv_weight = c.get_double("session/satisfaction_ipv_weight", ss.satisfaction_ipv_weight);
  ss.satisfaction_purchase_weight =
      c.get_double("session/satisfaction_purchase_weight", ss.satisfaction_purchase_weight);
  return w;
}

void validate(const WorldConfig& w) {
  if (w.users < 1) throw ConfigError("world needs at least one user");
  if (w.categories < 1) throw ConfigError("world needs at least one category");
  const auto& s = w.session;
  if (s.slate_size < 1) throw ConfigError("slate_size must be >= 1");
  if (w.items_per_category < s.slate_size + 1)
    throw ConfigError("items_per_category must be at least slate_size + 1");
  if (s.fstage_candidates < s.slate_size)
    throw ConfigError("fstage_candidates must be at least slate_size");
  if (s.estage_candidates < 1 || s.estage_list_length < 1)
    throw ConfigError("E-stage candidate and list sizes must be positive");
  if (s.max_pages < 1) throw ConfigError("max_pages must be >= 1");
  if (s.sessions_per_active_user < 1) throw ConfigError("sessions_per_active_user must be >= 1");
  if (w.day_count < 1) throw ConfigError("day_count must be >= 1");
  check_probability(w.high_involvement_fraction, "high_involvement_fraction");
  check_probability(s.same_category_fraction, "same_category_fraction");
  check_probability(w.comparison_bonus, "comparison_bonus");
  check_probability(w.comparison_bonus_cap, "comparison_bonus_cap");
  const auto& r = w.ranges;
  check_probability_range(r.base_cvr, "base_cvr");
  check_probability_range(r.cvr_gain, "cvr_gain");
  check_probability_range(r.exit_after_conversion, "exit_after_conversion");
  check_probability_range(r.exit_without_conversion, "exit_without_conversion");
  check_probability_range(r.ctr_base, "ctr_base");
  check_probability_range(r.sdr_star_base, "sdr_star_base");
  if (!(r.exit_after_conversion.lo > r.exit_without_conversion.hi))
    throw ConfigError("exit_after_conversion must exceed exit_without_conversion in every category");
  if (!(r.view_time_sigma.lo > 0.0)) throw ConfigError("view_time_sigma must be positive");
  if (r.conversion_view_shift.lo < 0.0) throw ConfigError("conversion_view_shift must be non-negative");
  for (auto [range, name] : {std::pair{w.affinity_beta, "affinity_beta"},
                             {w.patience_beta, "patience_beta"},
                             {w.return_propensity_beta, "return_propensity_beta"},
                             {w.quality_beta, "quality_beta"},
                             {w.appeal_beta, "appeal_beta"}})
    check_positive_beta(range, name);
}

void World::index() {
  items_by_category.assign(categories.size(), {});
  category_mean_quality.assign(categories.size(), 0.0);
  category_mean_appeal.assign(categories.size(), 0.0);
  for (const auto& it : items) {
    if (it.category_id < 0 || it.category_id >= static_cast<int>(categories.size()))
      throw InputError("item " + std::to_string(it.item_id) + " references unknown category");
    items_by_category[it.category_id].push_back(it.item_id);
    category_mean_quality[it.category_id] += it.quality;
    category_mean_appeal[it.category_id] += it.appeal;
  }
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double n = static_cast<double>(std::max<std::size_t>(1, items_by_category[c].size()));
    category_mean_quality[c] /= n;
    category_mean_appeal[c] /= n;
  }
}

const UserProfile& World::user(int user_id) const {
  if (user_id < 0 || user_id >= static_cast<int>(users.size()))
    throw LookupError("unknown user id " + std::to_string(user_id));
  return users[user_id];
}

const Item& World::item(int item_id) const {
  if (item_id < 0 || item_id >= static_cast<int>(items.size()))
    throw LookupError("unknown item id " + std::to_string(item_id));
  return items[item_id];
}

const CategoryParams& World::category(int category_id) const {
  if (category_id < 0 || category_id >= static_cast<int>(categories.size()))
    throw LookupError("unknown category id " + std::to_string(category_id));
  return categories[category_id];
}

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  validate(config);
  World w;
  w.seed = seed;
  w.day_count = config.day_count;
  w.behavior = config.behavior;
  w.session = config.session;

  Rng cat_rng(stream_key({seed, tag("categories")}));
  const int high = static_cast<int>(std::lround(config.high_involvement_fraction * config.categories));
  const auto& r = config.ranges;
  for (int c = 0; c < config.categories; ++c) {
    CategoryParams p;
    p.category_id = c;
    p.involvement = c < high ? Involvement::high_involvement : Involvement::standard;
    p.base_cvr = draw(cat_rng, r.base_cvr);
    p.cvr_gain = draw(cat_rng, r.cvr_gain);
    p.view_time_mu = draw(cat_rng, r.view_time_mu);
    p.view_time_sigma = draw(cat_rng, r.view_time_sigma);
    p.appeal_view_gain = draw(cat_rng, r.appeal_view_gain);
    p.conversion_view_shift = draw(cat_rng, r.conversion_view_shift);
    p.exit_after_conversion = draw(cat_rng, r.exit_after_conversion);
    p.exit_without_conversion = draw(cat_rng, r.exit_without_conversion);
    p.ctr_base = draw(cat_rng, r.ctr_base);
    p.sdr_star_base = draw(cat_rng, r.sdr_star_base);
    if (p.involvement == Involvement::high_involvement) {
      p.fstage_comparison_bonus = config.comparison_bonus;
      p.comparison_bonus_cap = config.comparison_bonus_cap;
    }
    w.categories.push_back(p);
  }

  Rng item_rng(stream_key({seed, tag("items")}));
  for (int c = 0; c < config.categories; ++c) {
    for (int k = 0; k < config.items_per_category; ++k) {
      Item it;
      it.item_id = static_cast<int>(w.items.size());
      it.category_id = c;
      it.quality = item_rng.beta(config.quality_beta.lo, config.quality_beta.hi);
      it.appeal = item_rng.beta(config.appeal_beta.lo, config.appeal_beta.hi);
      it.involvement = w.categories[c].involvement;
      w.items.push_back(it);
    }
  }

  Rng user_rng(stream_key({seed, tag("users")}));
  for (int u = 0; u < config.users; ++u) {
    UserProfile p;
    p.user_id = u;
    p.latent_affinity.resize(config.categories);
    for (auto& a : p.latent_affinity) a = user_rng.beta(config.affinity_beta.lo, config.affinity_beta.hi);
    p.patience = user_rng.beta(config.patience_beta.lo, config.patience_beta.hi);
    p.return_propensity =
        user_rng.beta(config.return_propensity_beta.lo, config.return_propensity_beta.hi);
    w.users.push_back(std::move(p));
  }
  w.index();
  return w;
}

double TrueBehaviorProbs::vtr(double threshold_seconds) const {
  if (threshold_seconds <= 0.0) return 1.0;
  const double lt = std::log(threshold_seconds);
  const double p_conv = upper_tail((lt - view_location - conversion_view_shift) / view_sigma);
  const double p_none = upper_tail((lt - view_location) / view_sigma);
  return cvr * p_conv + (1.0 - cvr) * p_none;
}

TrueBehaviorProbs true_scores(const World& world, int user_id, int item_id,
                              BehaviorContext context) {
  const auto& u = world.user(user_id);
  const auto& it = world.item(item_id);
  const auto& cat = world.category(it.category_id);
  const auto& b = world.behavior;
  const double affinity = u.latent_affinity[it.category_id];

  TrueBehaviorProbs t;
  const double bonus = std::min(cat.fstage_comparison_bonus * context.same_category_views,
                                cat.comparison_bonus_cap);
  t.cvr = clamp01(cat.base_cvr + cat.cvr_gain * it.quality * affinity + bonus);
  t.exit_if_converted = cat.exit_after_conversion;
  t.exit_if_not_converted = clamp01(cat.exit_without_conversion *
                                    (1.0 + b.patience_exit_gain * (0.5 - u.patience)) *
                                    (1.0 + b.appeal_exit_gain * (0.5 - it.appeal)));
  t.sdr = clamp01(1.0 - (t.cvr * t.exit_if_converted + (1.0 - t.cvr) * t.exit_if_not_converted));
  t.ctr = clamp01(cat.ctr_base * (1.0 + b.ctr_affinity_gain * (affinity - 0.5)) *
                  (1.0 + b.ctr_appeal_gain * (it.appeal - 0.5)));
  t.sdr_star = clamp01(cat.sdr_star_base + b.sdr_star_affinity_gain * (affinity - 0.5));
  t.view_location = cat.view_time_mu + cat.appeal_view_gain * (it.appeal - 0.5) +
                    b.affinity_view_gain * (affinity - 0.5);
  t.conversion_view_shift = cat.conversion_view_shift;
  t.view_sigma = cat.view_time_sigma;
  return t;
}

double lookahead_conversion_truth(const World& world, int user_id, int trigger_item_id) {
  const auto& u = world.user(user_id);
  const auto& trig = world.item(trigger_item_id);
  const auto& b = world.behavior;
  const auto& s = world.session;
  const int c = trig.category_id;
  const auto& cat = world.category(c);
  const double f = s.same_category_fraction;

  // Average other-category item, weighted by category size.
  double other_cvr = 0.0, other_exit = 0.0, other_n = 0.0;
  for (std::size_t k = 0; k < world.categories.size(); ++k) {
    if (static_cast<int>(k) == c) continue;
    const auto& ck = world.categories[k];
    const double n = static_cast<double>(world.items_by_category[k].size());
    const double a = u.latent_affinity[k];
    other_cvr += n * clamp01(ck.base_cvr + ck.cvr_gain * world.category_mean_quality[k] * a);
    other_exit += n * clamp01(ck.exit_without_conversion *
                              (1.0 + b.patience_exit_gain * (0.5 - u.patience)) *
                              (1.0 + b.appeal_exit_gain * (0.5 - world.category_mean_appeal[k])));
    other_n += n;
  }
  if (other_n > 0) {
    other_cvr /= other_n;
    other_exit /= other_n;
  }
  const double a = u.latent_affinity[c];
  const double same_exit = clamp01(cat.exit_without_conversion *
                                   (1.0 + b.patience_exit_gain * (0.5 - u.patience)) *
                                   (1.0 + b.appeal_exit_gain * (0.5 - world.category_mean_appeal[c])));
  const int slots = s.slate_size * s.max_pages;
  double alive = 1.0, any = 0.0;
  for (int k = 0; k < slots; ++k) {
    const double views = 1.0 + f * k;  // the trigger itself was viewed
    const double bonus = std::min(cat.fstage_comparison_bonus * views, cat.comparison_bonus_cap);
    const double same_cvr = clamp01(cat.base_cvr + cat.cvr_gain * world.category_mean_quality[c] * a + bonus);
    const double cvr = other_n > 0 ? f * same_cvr + (1.0 - f) * other_cvr : same_cvr;
    const double exit = other_n > 0 ? f * same_exit + (1.0 - f) * other_exit : same_exit;
    any += alive * cvr;
    alive *= (1.0 - cvr) * (1.0 - exit);
  }
  return clamp01(any);
}

int SessionLog::exposed_count() const {
  return static_cast<int>(std::count_if(fstage_slots.begin(), fstage_slots.end(),
                                        [](const SlotOutcome& s) { return s.exposed; }));
}

std::uint64_t SessionKey::stream(std::uint64_t purpose, std::uint64_t index) const {
  return stream_key({seed, static_cast<std::uint64_t>(user_id), static_cast<std::uint64_t>(day),
                     static_cast<std::uint64_t>(session_index), purpose, index});
}

std::vector<int> retrieve_fstage_candidates(const World& world, int trigger_item_id,
                                            const SessionKey& key) {
  const auto& trig = world.item(trigger_item_id);
  const auto& s = world.session;
  Rng rng(key.stream(tag("retrieve")));

  std::vector<int> same;
  for (int id : world.items_by_category[trig.category_id])
    if (id != trigger_item_id) same.push_back(id);
  const auto want_same = static_cast<std::size_t>(std::lround(s.same_category_fraction * s.fstage_candidates));
  auto out = sample_without_replacement(std::move(same), want_same, rng);

  std::vector<int> other;
  for (const auto& it : world.items)
    if (it.category_id != trig.category_id) other.push_back(it.item_id);
  const std::size_t want_other = static_cast<std::size_t>(s.fstage_candidates) - out.size();
  auto rest = sample_without_replacement(std::move(other), want_other, rng);
  out.insert(out.end(), rest.begin(), rest.end());

  // Top up from the trigger category if the other pool was too small.
  if (out.size() < static_cast<std::size_t>(s.fstage_candidates)) {
    for (int id : world.items_by_category[trig.category_id]) {
      if (out.size() >= static_cast<std::size_t>(s.fstage_candidates)) break;
      if (id != trigger_item_id && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    }
  }
  return out;
}

std::vector<int> sample_estage_candidates(const World& world, const SessionKey& key) {
  Rng rng(key.stream(tag("estage_candidates")));
  std::vector<int> all(world.items.size());
  std::iota(all.begin(), all.end(), 0);
  return sample_without_replacement(std::move(all),
                                    static_cast<std::size_t>(world.session.estage_candidates), rng);
}

namespace {

void check_slate(const std::vector<int>& slate, const FStageRequest& req) {
  if (static_cast<int>(slate.size()) != req.slate_size)
    throw ContractViolation("F-stage ranker returned " + std::to_string(slate.size()) +
                            " items, expected " + std::to_string(req.slate_size));
  for (std::size_t i = 0; i < slate.size(); ++i) {
    if (std::find(req.candidates.begin(), req.candidates.end(), slate[i]) == req.candidates.end())
      throw ContractViolation("F-stage ranker returned item " + std::to_string(slate[i]) +
                              " outside the candidate set");
    if (std::find(slate.begin(), slate.begin() + i, slate[i]) != slate.begin() + i)
      throw ContractViolation("F-stage ranker returned duplicate item " + std::to_string(slate[i]));
  }
}

}  // namespace

SessionLog simulate_session(const World& world, const UserProfile& user,
                            std::span<const int> ranked_estage, const FStageRanker& fstage_ranker,
                            const SessionKey& key) {
  if (ranked_estage.empty()) throw InputError("E-stage list must be non-empty");
  SessionLog log;
  log.user_id = user.user_id;
  log.day = key.day;
  log.session_index = key.session_index;

  for (std::size_t pos = 0; pos < ranked_estage.size(); ++pos) {
    const int item = ranked_estage[pos];
    log.estage.impressions.push_back(item);
    const auto truth = true_scores(world, user.user_id, item);
    Rng rng(key.stream(tag("estage"), pos));
    if (rng.uniform() < truth.ctr) {
      log.estage.clicked = true;
      log.trigger_item_id = item;
      log.estage.converted = rng.uniform() < truth.cvr;
      log.estage.entered_fstage = rng.uniform() < truth.sdr_star;
      break;
    }
  }
  if (!log.estage.entered_fstage) return log;

  const auto& s = world.session;
  std::vector<int> remaining = retrieve_fstage_candidates(world, log.trigger_item_id, key);
  std::vector<int> shown;
  std::vector<int> category_views(world.categories.size(), 0);
  category_views[world.item(log.trigger_item_id).category_id] = 1;

  bool alive = true;
  int position = 0;
  for (int page = 0; page < s.max_pages && alive; ++page) {
    if (static_cast<int>(remaining.size()) < s.slate_size) {
      log.end_of_list = true;
      break;
    }
    FStageRequest req{user.user_id, key.day, key.session_index, log.trigger_item_id, page,
                      s.slate_size, remaining, shown};
    const auto slate = fstage_ranker(req);
    check_slate(slate, req);

    for (int item : slate) {
      SlotOutcome slot;
      slot.position = ++position;
      slot.item_id = item;
      if (alive) {
        const int cat = world.item(item).category_id;
        const auto truth = true_scores(world, user.user_id, item, {category_views[cat]});
        Rng rng(key.stream(tag("fslot"), static_cast<std::uint64_t>(position)));
        slot.exposed = true;
        slot.converted = rng.uniform() < truth.cvr;
        const double z = rng.normal();
        slot.view_time_seconds = std::exp(truth.view_location +
                                          (slot.converted ? truth.conversion_view_shift : 0.0) +
                                          truth.view_sigma * z);
        const double exit_p = slot.converted ? truth.exit_if_converted : truth.exit_if_not_converted;
        slot.swiped_down = !(rng.uniform() < exit_p);
        ++category_views[cat];
        if (!slot.swiped_down) {
          alive = false;
          log.exited_at = position;
        }
      }
      log.fstage_slots.push_back(slot);
    }
    for (int item : slate) {
      shown.push_back(item);
      remaining.erase(std::find(remaining.begin(), remaining.end(), item));
    }
    if (alive && page + 1 == s.max_pages) log.end_of_list = true;
  }
  return log;
}

double user_satisfaction(const World& world, std::span<const SessionLog> user_sessions) {
  double ipv = 0.0, purchases = 0.0;
  for (const auto& log : user_sessions) {
    ipv += log.estage.clicked ? 1.0 : 0.0;
    purchases += log.estage.converted ? 1.0 : 0.0;
    for (const auto& slot : log.fstage_slots) {
      if (!slot.exposed) continue;
      if (slot.view_time_seconds > 2.0) ipv += 1.0;
      if (slot.converted) purchases += 1.0;
    }
  }
  return world.session.satisfaction_ipv_weight * ipv +
         world.session.satisfaction_purchase_weight * purchases;
}

DayResult simulate_day(const World& world, const PolicyBundle& policy, int day,
                       std::uint64_t run_seed, std::span<const double> previous_satisfaction,
                       int jobs) {
  if (day < 1) throw InputError("day must be >= 1");
  const auto& s = world.session;
  const std::size_t n_users = world.users.size();
  std::vector<std::vector<SessionLog>> per_user(n_users);
  std::vector<char> active(n_users, 0);
  std::vector<double> satisfaction(n_users, 0.0);

  parallel_for(n_users, jobs, [&](std::size_t u) {
    const auto& user = world.users[u];
    const double prev = u < previous_satisfaction.size() ? previous_satisfaction[u] : 0.0;
    const double rp = user.return_propensity;
    const double logit = std::log(rp) - std::log1p(-rp);
    const double p_active = 1.0 / (1.0 + std::exp(-(logit + s.dau_beta * prev)));
    Rng rng(stream_key({run_seed, tag("active"), u, static_cast<std::uint64_t>(day)}));
    if (!(rng.uniform() < p_active)) return;
    active[u] = 1;
    for (int k = 0; k < s.sessions_per_active_user; ++k) {
      SessionKey key{run_seed, user.user_id, day, k};
      const auto candidates = sample_estage_candidates(world, key);
      const int list_length = std::min<int>(s.estage_list_length, static_cast<int>(candidates.size()));
      auto ranked = policy.estage(user.user_id, candidates, list_length);
      if (static_cast<int>(ranked.size()) != list_length)
        throw ContractViolation("E-stage ranker returned " + std::to_string(ranked.size()) +
                                " items, expected " + std::to_string(list_length));
      per_user[u].push_back(simulate_session(world, user, ranked, policy.fstage, key));
    }
    satisfaction[u] = user_satisfaction(world, per_user[u]);
  });

  DayResult result;
  result.day = day;
  result.satisfaction = std::move(satisfaction);
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!active[u]) continue;
    result.active_users.push_back(static_cast<int>(u));
    for (auto& log : per_user[u]) result.logs.push_back(std::move(log));
  }
  return result;
}

std::vector<DayResult> simulate_days(const World& world, const PolicyBundle& policy, int first_day,
                                     int days, std::uint64_t run_seed, int jobs) {
  std::vector<DayResult> out;
  std::vector<double> previous;
  for (int d = first_day; d < first_day + days; ++d) {
    out.push_back(simulate_day(world, policy, d, run_seed, previous, jobs));
    previous = out.back().satisfaction;
  }
  return out;
}

nlohmann::json to_json(const World& w) {
  nlohmann::json j;
  j["v"] = 1;
  j["seed"] = w.seed;
  j["day_count"] = w.day_count;
  j["behavior"] = {{"affinity_view_gain", w.behavior.affinity_view_gain},
                   {"patience_exit_gain", w.behavior.patience_exit_gain},
                   {"appeal_exit_gain", w.behavior.appeal_exit_gain},
                   {"ctr_affinity_gain", w.behavior.ctr_affinity_gain},
                   {"ctr_appeal_gain", w.behavior.ctr_appeal_gain},
                   {"sdr_star_affinity_gain", w.behavior.sdr_star_affinity_gain}};
  const auto& s = w.session;
  j["session"] = {{"estage_candidates", s.estage_candidates},
                  {"estage_list_length", s.estage_list_length},
                  {"fstage_candidates", s.fstage_candidates},
                  {"slate_size", s.slate_size},
                  {"max_pages", s.max_pages},
                  {"same_category_fraction", s.same_category_fraction},
                  {"sessions_per_active_user", s.sessions_per_active_user},
                  {"dau_beta", s.dau_beta},
                  {"satisfaction_ipv_weight", s.satisfaction_ipv_weight},
                  {"satisfaction_purchase_weight", s.satisfaction_purchase_weight}};
  auto& cats = j["categories"] = nlohmann::json::array();
  for (const auto& c : w.categories) {
    cats.push_back({{"id", c.category_id},
                    {"involvement", involvement_name(c.involvement)},
                    {"base_cvr", c.base_cvr},
                    {"cvr_gain", c.cvr_gain},
                    {"view_time_mu", c.view_time_mu},
                    {"view_time_sigma", c.view_time_sigma},
                    {"appeal_view_gain", c.appeal_view_gain},
                    {"conversion_view_shift", c.conversion_view_shift},
                    {"exit_after_conversion", c.exit_after_conversion},
                    {"exit_without_conversion", c.exit_without_conversion},
                    {"fstage_comparison_bonus", c.fstage_comparison_bonus},
                    {"comparison_bonus_cap", c.comparison_bonus_cap},
                    {"ctr_base", c.ctr_base},
                    {"sdr_star_base", c.sdr_star_base}});
  }
  auto& items = j["items"] = nlohmann::json::array();
  for (const auto& it : w.items)
    items.push_back({it.item_id, it.category_id, it.quality, it.appeal});
  auto& users = j["users"] = nlohmann::json::array();
  for (const auto& u : w.users)
    users.push_back({{"id", u.user_id},
                     {"affinity", u.latent_affinity},
                     {"patience", u.patience},
                     {"return_propensity", u.return_propensity}});
  return j;
}

World world_from_json(const nlohmann::json& j) {
  try {
    if (j.at("v").get<int>() != 1) throw InputError("unsupported world schema version");
    World w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.day_count = j.at("day_count").get<int>();
    const auto& b = j.at("behavior");
    w.behavior = {b.at("affinity_view_gain"), b.at("patience_exit_gain"), b.at("appeal_exit_gain"),
                  b.at("ctr_affinity_gain"), b.at("ctr_appeal_gain"), b.at("sdr_star_affinity_gain")};
    const auto& s = j.at("session");
    w.session = {s.at("estage_candidates"), s.at("estage_list_length"), s.at("fstage_candidates"),
                 s.at("slate_size"), s.at("max_pages"), s.at("same_category_fraction"),
                 s.at("sessions_per_active_user"), s.at("dau_beta"),
                 s.at("satisfaction_ipv_weight"), s.at("satisfaction_purchase_weight")};
    for (const auto& c : j.at("categories")) {
      CategoryParams p;
      p.category_id = c.at("id");
      p.involvement = involvement_from(c.at("involvement"));
      p.base_cvr = c.at("base_cvr");
      p.cvr_gain = c.at("cvr_gain");
      p.view_time_mu = c.at("view_time_mu");
      p.view_time_sigma = c.at("view_time_sigma");
      p.appeal_view_gain = c.at("appeal_view_gain");
      p.conversion_view_shift = c.at("conversion_view_shift");
      p.exit_after_conversion = c.at("exit_after_conversion");
      p.exit_without_conversion = c.at("exit_without_conversion");
      p.fstage_comparison_bonus = c.at("fstage_comparison_bonus");
      p.comparison_bonus_cap = c.at("comparison_bonus_cap");
      p.ctr_base = c.at("ctr_base");
      p.sdr_star_base = c.at("sdr_star_base");
      w.categories.push_back(p);
    }
    for (const auto& it : j.at("items")) {
      Item item{it.at(0), it.at(1), it.at(2), it.at(3), Involvement::standard};
      item.involvement = w.categories.at(item.category_id).involvement;
      w.items.push_back(item);
    }
    for (const auto& u : j.at("users"))
      w.users.push_back({u.at("id"), u.at("affinity").get<std::vector<double>>(), u.at("patience"),
                         u.at("return_propensity")});
    w.index();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed world file: ") + e.what());
  }
}

nlohmann::json to_json(const SessionLog& log) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : log.fstage_slots)
    slots.push_back({{"pos", s.position},
                     {"item", s.item_id},
                     {"t", s.view_time_seconds},
                     {"cvr", s.converted ? 1 : 0},
                     {"sdr", s.swiped_down ? 1 : 0},
                     {"exp", s.exposed ? 1 : 0}});
  return {{"v", kSessionSchemaVersion},
          {"user", log.user_id},
          {"day", log.day},
          {"session", log.session_index},
          {"trigger", log.trigger_item_id},
          {"estage",
           {{"impressions", log.estage.impressions},
            {"clicked", log.estage.clicked ? 1 : 0},
            {"converted", log.estage.converted ? 1 : 0},
            {"entered_fstage", log.estage.entered_fstage ? 1 : 0}}},
          {"fstage", slots},
          {"exited_at", log.exited_at == 0 ? nlohmann::json(nullptr) : nlohmann::json(log.exited_at)},
          {"end_of_list", log.end_of_list}};
}

SessionLog session_from_json(const nlohmann::json& j) {
  try {
    if (j.at("v").get<int>() != kSessionSchemaVersion)
      throw InputError("unsupported session schema version " + j.at("v").dump());
    SessionLog log;
    log.user_id = j.at("user");
    log.day = j.at("day");
    log.session_index = j.at("session");
    log.trigger_item_id = j.at("trigger");
    const auto& e = j.at("estage");
    log.estage.impressions = e.at("impressions").get<std::vector<int>>();
    log.estage.clicked = e.at("clicked").get<int>() != 0;
    log.estage.converted = e.at("converted").get<int>() != 0;
    log.estage.entered_fstage = e.at("entered_fstage").get<int>() != 0;
    for (const auto& s : j.at("fstage"))
      log.fstage_slots.push_back({s.at("pos"), s.at("item"), s.at("t"), s.at("cvr").get<int>() != 0,
                                  s.at("sdr").get<int>() != 0, s.at("exp").get<int>() != 0});
    log.exited_at = j.at("exited_at").is_null() ? 0 : j.at("exited_at").get<int>();
    log.end_of_list = j.at("end_of_list");
    return log;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed session record: ") + e.what());
  }
}

}  // namespace stcrank
