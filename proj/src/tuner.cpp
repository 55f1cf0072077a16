#include "stcrank/tuner.hpp"

#include "stcrank/error.hpp"
#include "stcrank/parallel.hpp"
#include "stcrank/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stcrank {

void ValidationSet::add(const ObjectiveScores& s, int y_vtr, int y_cvr, int y_sdr, double sdr_weight,
                        double vtr_weight, double cvr_weight) {
  const double p[3] = {s.vtr(), s.cvr(), s.sdr()};
  const int y[3] = {y_vtr, y_cvr, y_sdr};
  const double w[3] = {vtr_weight, cvr_weight, sdr_weight};
  for (int j = 0; j < 3; ++j) {
    if (y[j] != 0 && y[j] != 1) throw InputError("validation labels must be binary");
    if (!(w[j] >= 0.0)) throw InputError("validation weights must be non-negative");
    predicted[j].push_back(p[j]);
    labels[j].push_back(y[j]);
    weights[j].push_back(w[j]);
  }
}

void ValidationSet::check() const {
  for (int j = 0; j < 3; ++j) {
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < labels[j].size(); ++i) (labels[j][i] ? pos : neg) += weights[j][i];
    if (!(pos > 0.0) || !(neg > 0.0))
      throw DegenerateError(std::string("validation labels for ") +
                            std::string(name(kFStageObjectives[j])) + " need both classes");
  }
}

ValidationSet build_validation_set(const World& world, std::span<const SessionLog> logs,
                                   const PredictorModel& model, const LabelSpec& spec) {
  ValidationSet v;
  for (const auto& log : logs) {
    if (!log.estage.entered_fstage) continue;
    const auto sdr = sdr_samples(world, log, spec.sdr_mode, spec.conflict_filter);
    std::size_t next_sdr = 0;
    for (const auto& slot : log.fstage_slots) {
      if (!slot.exposed) continue;
      const auto features = featurize(world, {log.user_id, slot.item_id, log.trigger_item_id, slot.position});
      const auto scores = predict(model, features);
      int y_sdr = slot.swiped_down ? 1 : 0;
      double w_sdr = 0.0;
      if (next_sdr < sdr.size() && sdr[next_sdr].source.position == slot.position) {
        y_sdr = sdr[next_sdr].label;
        w_sdr = sdr[next_sdr].weight;
        ++next_sdr;
      }
      v.add(scores, binarize_vtr(slot.view_time_seconds, spec.vtr_threshold), slot.converted ? 1 : 0,
            y_sdr, w_sdr);
    }
  }
  return v;
}

double tune_objective(const EnsembleWeights& w, const ValidationSet& v) {
  w.validate();
  v.check();
  const std::size_t n = v.size();
  std::vector<double> value(n);
  for (std::size_t i = 0; i < n; ++i)
    value[i] = w.vtr * v.predicted[0][i] + w.cvr * v.predicted[1][i] + w.sdr * v.predicted[2][i];
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return value[a] < value[b]; });
  double total = 0.0;
  for (int j = 0; j < 3; ++j) total += auc_presorted(value, v.labels[j], v.weights[j], order);
  return total;
}

TuneMethod tune_method_from(const std::string& s) {
  if (s == "random") return TuneMethod::random;
  if (s == "coordinate") return TuneMethod::coordinate;
  if (s == "bayes_like") return TuneMethod::bayes_like;
  throw ConfigError("unknown tune method '" + s + "'");
}

void TuneSpec::validate() const {
  for (const Box* b : {&w_vtr, &w_cvr, &w_sdr, &alpha})
    if (!(b->lo < b->hi) || b->lo < 0.0) throw InputError("tune boxes need 0 <= lo < hi");
  if (!(w_vtr.hi > 0.0 || w_cvr.hi > 0.0 || w_sdr.hi > 0.0))
    throw InputError("tune box admits no positive weight");
  if (budget < 1) throw InputError("tune budget must be at least 1");
}

namespace {

Box box_from(const Config& c, const std::string& key, Box fallback) {
  const auto v = c.get_doubles(key, {fallback.lo, fallback.hi});
  if (v.size() != 2) throw ConfigError(key + " must be a [lo, hi] pair");
  return {v[0], v[1]};
}

constexpr int kDims = 4;

std::array<const Box*, kDims> boxes(const TuneSpec& s) { return {&s.w_vtr, &s.w_cvr, &s.w_sdr, &s.alpha}; }

int active_dims(const TuneSpec& s) { return s.tune_alpha ? 4 : 3; }

using Vec = std::array<double, kDims>;

TunePoint to_point(const Vec& x) { return {{x[0], x[1], x[2]}, x[3]}; }

Vec to_vec(const TunePoint& p) { return {p.weights.vtr, p.weights.cvr, p.weights.sdr, p.alpha}; }

Vec clamp_into(const TuneSpec& s, Vec x) {
  const auto b = boxes(s);
  for (int d = 0; d < kDims; ++d) x[d] = std::clamp(x[d], b[d]->lo, b[d]->hi);
  if (!s.tune_alpha) x[3] = std::clamp(1.0, s.alpha.lo, s.alpha.hi);
  return x;
}

Vec random_point(const TuneSpec& s, std::uint64_t purpose, std::size_t index) {
  Rng rng(stream_key({s.seed, purpose, index}));
  const auto b = boxes(s);
  Vec x{};
  for (int d = 0; d < kDims; ++d) x[d] = rng.uniform(b[d]->lo, b[d]->hi);
  return clamp_into(s, x);
}

bool admissible(const Vec& x) { return x[0] > 0.0 || x[1] > 0.0 || x[2] > 0.0; }

double evaluate(const Vec& x, const ValidationSet& v) {
  if (!admissible(x)) return 0.0;
  return tune_objective(to_point(x).weights, v);
}

// Quadratic surrogate in the active dimensions, fitted by ridge least squares.
class Surrogate {
 public:
  Surrogate(const std::vector<TuneProbe>& trace, int dims) : dims_(dims) {
    const int terms = term_count();
    Eigen::MatrixXd a(static_cast<Eigen::Index>(trace.size()), terms);
    Eigen::VectorXd y(static_cast<Eigen::Index>(trace.size()));
    for (std::size_t r = 0; r < trace.size(); ++r) {
      a.row(static_cast<Eigen::Index>(r)) = basis(to_vec(trace[r].point));
      y(static_cast<Eigen::Index>(r)) = trace[r].objective;
    }
    const Eigen::MatrixXd gram = a.transpose() * a + 1e-6 * Eigen::MatrixXd::Identity(terms, terms);
    coef_ = gram.ldlt().solve(a.transpose() * y);
  }

  double predict(const Vec& x) const { return basis(x).dot(coef_); }

 private:
  int term_count() const { return 1 + dims_ + dims_ * (dims_ + 1) / 2; }

  Eigen::RowVectorXd basis(const Vec& x) const {
    Eigen::RowVectorXd row(term_count());
    int k = 0;
    row(k++) = 1.0;
    for (int d = 0; d < dims_; ++d) row(k++) = x[d];
    for (int d = 0; d < dims_; ++d)
      for (int e = d; e < dims_; ++e) row(k++) = x[d] * x[e];
    return row;
  }

  int dims_;
  Eigen::VectorXd coef_;
};

constexpr std::size_t kSurrogateCandidates = 512;

}  // namespace

TuneSpec tune_spec_from(const Config& c, const std::string& section, const TuneSpec& fallback) {
  TuneSpec s = fallback;
  s.w_vtr = box_from(c, section + "/w_vtr", fallback.w_vtr);
  s.w_cvr = box_from(c, section + "/w_cvr", fallback.w_cvr);
  s.w_sdr = box_from(c, section + "/w_sdr", fallback.w_sdr);
  s.alpha = box_from(c, section + "/alpha", fallback.alpha);
  s.tune_alpha = c.get_bool(section + "/tune_alpha", fallback.tune_alpha);
  s.budget = static_cast<int>(c.get_int(section + "/budget", fallback.budget));
  s.method = tune_method_from(c.get_string(section + "/method", "random"));
  s.seed = static_cast<std::uint64_t>(c.get_int(section + "/seed", static_cast<long long>(fallback.seed)));
  try {
    s.validate();
  } catch (const InputError& e) {
    throw ConfigError(section + ": " + e.what());
  }
  return s;
}

TunePoint default_probe(const TuneSpec& spec) { return to_point(clamp_into(spec, {1.0, 1.0, 1.0, 1.0})); }

EnsembleWeights normalized(const EnsembleWeights& w) {
  const double sum = w.vtr + w.cvr + w.sdr;
  if (!(sum > 0.0)) throw InputError("cannot normalize all-zero weights");
  return {w.vtr / sum, w.cvr / sum, w.sdr / sum};
}

TuneResult tune(const TuneSpec& spec, const ValidationSet& validation, int jobs) {
  spec.validate();
  validation.check();
  const auto budget = static_cast<std::size_t>(spec.budget);
  const int dims = active_dims(spec);
  std::vector<TuneProbe> trace;
  trace.reserve(budget);
  const Vec first = to_vec(default_probe(spec));

  switch (spec.method) {
    case TuneMethod::random: {
      std::vector<Vec> probes(budget);
      probes[0] = first;
      for (std::size_t i = 1; i < budget; ++i) probes[i] = random_point(spec, tag("tune.random"), i);
      std::vector<double> values(budget);
      parallel_for(budget, jobs, [&](std::size_t i) { values[i] = evaluate(probes[i], validation); });
      for (std::size_t i = 0; i < budget; ++i) trace.push_back({to_point(probes[i]), values[i]});
      break;
    }
    case TuneMethod::coordinate: {
      // Pattern search: try +/- step along each active axis from the incumbent,
      // halving the step after a full sweep without improvement.
      const auto b = boxes(spec);
      Vec best = first;
      double best_value = evaluate(first, validation);
      trace.push_back({to_point(first), best_value});
      double step = 0.25;
      bool improved = false;
      int axis = 0, sign = 1;
      while (trace.size() < budget) {
        Vec x = best;
        x[axis] += sign * step * (b[axis]->hi - b[axis]->lo);
        x = clamp_into(spec, x);
        const double value = evaluate(x, validation);
        trace.push_back({to_point(x), value});
        if (value > best_value) {
          best = x;
          best_value = value;
          improved = true;
        }
        if (sign == 1) {
          sign = -1;
        } else {
          sign = 1;
          if (++axis == dims) {
            axis = 0;
            if (!improved) step *= 0.5;
            improved = false;
          }
        }
      }
      break;
    }
    case TuneMethod::bayes_like: {
      const std::size_t warmup = std::min<std::size_t>(budget, static_cast<std::size_t>(4 * dims + 4));
      trace.push_back({to_point(first), evaluate(first, validation)});
      for (std::size_t i = 1; i < warmup; ++i) {
        const Vec x = random_point(spec, tag("tune.warmup"), i);
        trace.push_back({to_point(x), evaluate(x, validation)});
      }
      for (std::size_t i = warmup; i < budget; ++i) {
        const Surrogate model(trace, dims);
        Vec pick{};
        double pick_value = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < kSurrogateCandidates; ++c) {
          const Vec x = random_point(spec, tag("tune.candidate"), i * kSurrogateCandidates + c);
          const double p = model.predict(x);
          if (p > pick_value) {
            pick = x;
            pick_value = p;
          }
        }
        trace.push_back({to_point(pick), evaluate(pick, validation)});
      }
      break;
    }
  }

  TuneResult r;
  r.trace = std::move(trace);
  r.default_objective = r.trace.front().objective;
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    if (r.trace[i].objective > r.trace[best].objective) best = i;
  r.best_raw = r.trace[best].point;
  r.best_objective = r.trace[best].objective;
  r.best_weights = normalized(r.best_raw.weights);
  r.best_alpha = r.best_raw.alpha;
  return r;
}

nlohmann::json to_json(const TuneProbe& p) {
  return {{"v", 1},
          {"w_vtr", p.point.weights.vtr},
          {"w_cvr", p.point.weights.cvr},
          {"w_sdr", p.point.weights.sdr},
          {"alpha", p.point.alpha},
          {"objective", p.objective}};
}

nlohmann::json to_json(const TuneResult& r) {
  return {{"v", 1},
          {"w_vtr", r.best_weights.vtr},
          {"w_cvr", r.best_weights.cvr},
          {"w_sdr", r.best_weights.sdr},
          {"alpha", r.best_alpha},
          {"best_objective", r.best_objective},
          {"default_objective", r.default_objective},
          {"probes", r.trace.size()}};
}

}  // namespace stcrank
