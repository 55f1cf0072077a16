#include "stcrank/oracle_suites.hpp"

#include "stcrank/error.hpp"
#include "stcrank/metrics.hpp"
#include "stcrank/predictor.hpp"
#include "stcrank/reranker.hpp"
#include "stcrank/rng.hpp"
#include "stcrank/tuner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace stcrank {

namespace {

// Scores are either continuous or drawn from a coarse grid so that exact
// ties between different slates occur.
std::vector<ScoredCandidate> random_candidates(Rng& rng, int n, bool coarse) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 100);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  auto draw = [&] { return coarse ? static_cast<double>(rng.below(3)) * 0.5 : rng.uniform(); };
  std::vector<ScoredCandidate> out;
  for (int i = 0; i < n; ++i) {
    const double v = draw(), c = draw(), s = draw();
    out.push_back({ids[static_cast<std::size_t>(i)], ObjectiveScores(v, c, s), 0.0, 0.0});
  }
  return out;
}

EnsembleWeights random_weights(Rng& rng, bool coarse) {
  if (coarse) return {1.0, 1.0, 1.0};
  return {rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)};
}

double naive_sequence_value(std::span<const int> perm, std::span<const ScoredCandidate> c,
                            const EnsembleWeights& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    double reach = 1.0;
    for (std::size_t k = 0; k < i; ++k)
      for (const auto& x : c)
        if (x.item_id == perm[k]) reach *= x.scores.sdr();
    for (const auto& x : c)
      if (x.item_id == perm[i]) total += reach * (w.vtr * x.scores.vtr() + w.cvr * x.scores.cvr() + w.sdr * x.scores.sdr());
  }
  return total;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

SuiteResult beam_matches_brute_force(std::uint64_t seed, int draws) {
  SuiteResult r{"beam_matches_brute_force", true, "", 0.0};
  double worst = 0.0;
  long checked = 0;
  for (int n = 5; n <= 8; ++n) {
    for (int m = 2; m <= 4; ++m) {
      Rng rng(stream_key({seed, tag("beam_vs_bf"), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m)}));
      const int width = static_cast<int>(permutation_count(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m)));
      for (int d = 0; d < draws; ++d) {
        const bool coarse = d % 5 == 4;
        const auto c = random_candidates(rng, n, coarse);
        const auto w = random_weights(rng, coarse);
        const auto bf = brute_force_best(c, m, w);
        const auto beam = beam_search(c, {width, m}, w);
        const double gap = std::abs(bf.sequence_value - beam.sequence_value);
        worst = std::max(worst, gap);
        ++checked;
        if (gap > 1e-12 || bf.permutation != beam.permutation) {
          if (r.passed)
            r.detail = fmt::format("first mismatch at n={} m={} draw={}: brute {} vs beam {}", n, m, d,
                                   bf.sequence_value, beam.sequence_value);
          r.passed = false;
        }
      }
    }
  }
  r.measured = worst;
  if (r.passed) r.detail = fmt::format("{} draws, max |value gap| = {:.3g}, permutations identical", checked, worst);
  return r;
}

SuiteResult beam_quality(std::uint64_t seed, int beam_width, int n, int m, int draws, double floor) {
  SuiteResult r{fmt::format("beam_quality_B{}", beam_width), true, "", 1.0};
  Rng rng(stream_key({seed, tag("beam_quality")}));
  int below = 0;
  for (int d = 0; d < draws; ++d) {
    const auto c = random_candidates(rng, n, false);
    const auto w = random_weights(rng, false);
    const double best = brute_force_best(c, m, w).sequence_value;
    const double beam = beam_search(c, {beam_width, m}, w).sequence_value;
    r.measured = std::min(r.measured, beam / best);
    below += beam / best < floor ? 1 : 0;
  }
  r.passed = r.measured >= floor;
  r.detail = fmt::format("n={} m={} B={}: min beam/brute ratio {:.6f}, {} of {} draws below floor {}", n, m,
                         beam_width, r.measured, below, draws, floor);
  return r;
}

SuiteResult brute_force_matches_enumeration(std::uint64_t seed, int draws) {
  SuiteResult r{"brute_force_matches_enumeration", true, "", 0.0};
  Rng rng(stream_key({seed, tag("bf_enum")}));
  for (int d = 0; d < draws; ++d) {
    const int n = 4 + static_cast<int>(rng.below(4));
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(n, 4))));
    const bool coarse = d % 4 == 3;
    const auto c = random_candidates(rng, n, coarse);
    const auto w = random_weights(rng, coarse);
    // Enumerate every ordered m-subset via sorted ids and next_permutation.
    std::vector<int> ids;
    for (const auto& x : c) ids.push_back(x.item_id);
    std::sort(ids.begin(), ids.end());
    double best = -1.0;
    std::vector<int> best_perm;
    std::set<std::vector<int>> seen;
    do {
      std::vector<int> prefix(ids.begin(), ids.begin() + m);
      if (!seen.insert(prefix).second) continue;
      const double v = naive_sequence_value(prefix, c, w);
      if (v > best + 1e-12 || (std::abs(v - best) <= 1e-12 && prefix < best_perm)) {
        best = v;
        best_perm = prefix;
      }
    } while (std::next_permutation(ids.begin(), ids.end()));
    const auto bf = brute_force_best(c, m, w);
    const double gap = std::abs(bf.sequence_value - best);
    r.measured = std::max(r.measured, gap);
    if (gap > 1e-12 || (!coarse && bf.permutation != best_perm)) {
      if (r.passed) r.detail = fmt::format("mismatch at draw {}: {} vs {}", d, bf.sequence_value, best);
      r.passed = false;
    }
  }
  if (r.passed) r.detail = fmt::format("{} draws, max |value gap| = {:.3g}", draws, r.measured);
  return r;
}

namespace {

double pairwise_auc(std::span<const double> s, std::span<const int> y, std::span<const double> w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      const double pw = w[i] * w[j];
      den += pw;
      if (s[i] > s[j]) num += pw;
      else if (s[i] == s[j]) num += 0.5 * pw;
    }
  }
  return num / den;
}

}  // namespace

SuiteResult auc_matches_pairwise(std::uint64_t seed, int instances) {
  SuiteResult r{"auc_matches_pairwise", true, "", 0.0};
  Rng rng(stream_key({seed, tag("auc")}));
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(200);
    const bool weighted = t % 2 == 1;
    std::vector<double> s(n), w(n, 1.0);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 3 == 0 ? static_cast<double>(rng.below(5)) : rng.uniform();
      y[i] = static_cast<int>(rng.below(2));
      if (weighted) w[i] = rng.below(4) == 0 ? 0.0 : rng.uniform(0.1, 3.0);
    }
    y[0] = 1;
    y[1] = 0;
    w[0] = w[1] = 1.0;
    const double fast = weighted ? auc(s, y, w) : auc(s, y);
    const double slow = pairwise_auc(s, y, w);
    r.measured = std::max(r.measured, std::abs(fast - slow));
  }
  r.passed = r.measured <= 1e-12;
  r.detail = fmt::format("{} instances, max |AUC - pairwise| = {:.3g}", instances, r.measured);
  return r;
}

SuiteResult bce_gradient_matches_finite_differences(std::uint64_t seed, int instances) {
  SuiteResult r{"bce_gradient_matches_finite_differences", true, "", 0.0};
  Rng rng(stream_key({seed, tag("bce")}));
  for (int t = 0; t < instances; ++t) {
    LogisticHead head;
    head.bias = rng.uniform(-1.0, 1.0);
    std::vector<TrainingSample> samples;
    const int count = 5 + static_cast<int>(rng.below(30));
    for (int i = 0; i < count; ++i) {
      TrainingSample s;
      s.objective = Objective::cvr;
      const int nf = 1 + static_cast<int>(rng.below(6));
      for (int f = 0; f < nf; ++f) s.features.push_back({static_cast<std::uint32_t>(rng.below(40)), rng.uniform(0.2, 1.5)});
      s.label = static_cast<int>(rng.below(2));
      s.weight = rng.below(5) == 0 ? 0.0 : 1.0;
      samples.push_back(std::move(s));
    }
    for (std::uint32_t f = 0; f < 40; ++f) head.weights[f] = rng.uniform(-1.0, 1.0);
    const auto grad = weighted_bce_gradient(head, samples);
    const double h = 1e-5;
    auto check = [&](double analytic, double& param) {
      const double keep = param;
      param = keep + h;
      const double up = weighted_bce_loss(head, samples);
      param = keep - h;
      const double down = weighted_bce_loss(head, samples);
      param = keep;
      const double numeric = (up - down) / (2 * h);
      if (std::abs(analytic) < 1e-7 && std::abs(numeric) < 1e-7) return;
      r.measured = std::max(r.measured, relative_gap(analytic, numeric));
    };
    check(grad.bias, head.bias);
    for (std::uint32_t f = 0; f < 40; ++f) {
      const auto it = grad.weights.find(f);
      check(it == grad.weights.end() ? 0.0 : it->second, head.weights[f]);
    }
  }
  r.passed = r.measured <= 1e-5;
  r.detail = fmt::format("{} instances, max relative gap = {:.3g}", instances, r.measured);
  return r;
}

namespace {

std::vector<double> quadratic_ranks(std::span<const double> x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double v : x) {
      if (v < x[i]) less += 1.0;
      else if (v == x[i]) equal += 1.0;
    }
    r[i] = less + 0.5 * (equal + 1.0);
  }
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

SuiteResult spearman_matches_rank_then_pearson(std::uint64_t seed, int instances) {
  SuiteResult r{"spearman_matches_rank_then_pearson", true, "", 0.0};
  Rng rng(stream_key({seed, tag("spearman")}));
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(100);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = t % 2 ? static_cast<double>(rng.below(6)) : rng.uniform();
      y[i] = t % 3 ? static_cast<double>(rng.below(2)) : rng.normal();
    }
    x[0] = -1.0;
    x[1] = 10.0;
    y[0] = -1.0;
    y[1] = 10.0;
    const double fast = spearman_rho(x, y);
    const double slow = pearson(quadratic_ranks(x), quadratic_ranks(y));
    r.measured = std::max(r.measured, std::abs(fast - slow));
  }
  r.passed = r.measured <= 1e-12;
  r.detail = fmt::format("{} instances, max |rho - oracle| = {:.3g}", instances, r.measured);
  return r;
}

SuiteResult exposure_probs_properties(std::uint64_t seed, int inputs) {
  SuiteResult r{"exposure_probs_properties", true, "", 0.0};
  Rng rng(stream_key({seed, tag("exposure")}));
  int failures = 0;
  for (int t = 0; t < inputs; ++t) {
    const std::size_t m = 1 + rng.below(12);
    std::vector<double> sdr(m);
    for (auto& s : sdr) s = rng.below(10) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    const auto p = exposure_probs(sdr);
    bool ok = p.size() == m && p[0] == 1.0;
    for (std::size_t i = 1; ok && i < p.size(); ++i) ok = p[i] <= p[i - 1] && p[i] >= 0.0;
    failures += ok ? 0 : 1;
  }
  r.passed = failures == 0;
  r.measured = failures;
  r.detail = fmt::format("{} inputs, {} violations of p[1] = 1 or monotone non-increase", inputs, failures);
  return r;
}

SuiteResult tune_objective_matches_pairwise(std::uint64_t seed, int instances) {
  SuiteResult r{"tune_objective_matches_pairwise", true, "", 0.0};
  Rng rng(stream_key({seed, tag("tune_objective")}));
  for (int t = 0; t < instances; ++t) {
    ValidationSet v;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      const int yv = i % 2, yc = (i / 2) % 2, ys = (i / 4) % 2;
      v.add(ObjectiveScores(rng.uniform(), rng.uniform(), rng.uniform()), yv, yc, ys,
            rng.below(4) == 0 ? 0.0 : 1.0);
    }
    v.weights[2][0] = v.weights[2][4] = 1.0;
    const EnsembleWeights w{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.1, 2.0)};
    std::vector<double> value(n);
    for (int i = 0; i < n; ++i)
      value[i] = w.vtr * v.predicted[0][i] + w.cvr * v.predicted[1][i] + w.sdr * v.predicted[2][i];
    double expected = 0.0;
    for (int j = 0; j < 3; ++j) expected += pairwise_auc(value, v.labels[j], v.weights[j]);
    r.measured = std::max(r.measured, std::abs(tune_objective(w, v) - expected));
  }
  r.passed = r.measured <= 1e-12;
  r.detail = fmt::format("{} validation sets of 20, max |objective - pairwise sum| = {:.3g}", instances, r.measured);
  return r;
}

SuiteResult hitrate_matches_set_count(std::uint64_t seed, int instances) {
  SuiteResult r{"hitrate_matches_set_count", true, "", 0.0};
  Rng rng(stream_key({seed, tag("hitrate")}));
  for (int t = 0; t < instances; ++t) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (auto& x : a) x = static_cast<int>(rng.below(20));
    std::iota(b.begin(), b.end(), 0);
    for (std::size_t i = b.size(); i > 1; --i) std::swap(b[i - 1], b[rng.below(i)]);
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    for (std::size_t i = a.size(); i > 1; --i) std::swap(a[i - 1], a[rng.below(i)]);
    const int len = static_cast<int>(std::min(a.size(), b.size()));
    for (int k = 1; k <= len; ++k) {
      int hits = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) hits += a[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(j)];
      const double expected = static_cast<double>(hits) / k;
      r.measured = std::max({r.measured, std::abs(hitrate_at_k(a, b, k) - expected),
                             std::abs(hitrate_at_k(b, a, k) - expected)});
    }
  }
  r.passed = r.measured == 0.0;
  r.detail = fmt::format("{} list pairs, max |hitrate - count| = {:.3g}, symmetric", instances, r.measured);
  return r;
}

std::vector<SuiteResult> run_oracle_suites(std::uint64_t seed) {
  return {beam_matches_brute_force(seed),
          beam_quality(seed),
          brute_force_matches_enumeration(seed),
          auc_matches_pairwise(seed),
          bce_gradient_matches_finite_differences(seed),
          spearman_matches_rank_then_pearson(seed),
          exposure_probs_properties(seed),
          tune_objective_matches_pairwise(seed),
          hitrate_matches_set_count(seed)};
}

}  // namespace stcrank
