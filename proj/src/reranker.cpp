#include "stcrank/reranker.hpp"

#include "stcrank/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace stcrank {

void BeamConfig::validate() const {
  if (beam_width < 1) throw InputError("beam width must be >= 1");
  if (m < 1) throw InputError("slate length must be >= 1");
}

std::vector<double> exposure_probs(std::span<const double> sdr) {
  std::vector<double> p(sdr.size());
  double running = 1.0;
  for (std::size_t i = 0; i < sdr.size(); ++i) {
    if (!(sdr[i] >= 0.0 && sdr[i] <= 1.0)) throw InputError("swipe-down rates must lie in [0, 1]");
    p[i] = running;
    running *= sdr[i];
  }
  return p;
}

SlateEvaluation sequence_value(std::span<const int> permutation,
                               std::span<const ScoredCandidate> candidates,
                               const EnsembleWeights& weights) {
  std::unordered_map<int, const ScoredCandidate*> by_id;
  for (const auto& c : candidates) by_id.emplace(c.item_id, &c);

  SlateEvaluation e;
  e.permutation.assign(permutation.begin(), permutation.end());
  std::vector<double> sdr;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    if (std::find(permutation.begin(), permutation.begin() + static_cast<std::ptrdiff_t>(i),
                  permutation[i]) != permutation.begin() + static_cast<std::ptrdiff_t>(i))
      throw InputError("duplicate item " + std::to_string(permutation[i]) + " in permutation");
    auto it = by_id.find(permutation[i]);
    if (it == by_id.end()) throw LookupError("item " + std::to_string(permutation[i]) + " has no scores");
    sdr.push_back(it->second->scores.sdr());
    e.item_values.push_back(item_value(it->second->scores, weights));
  }
  e.exposure_probs = exposure_probs(sdr);
  for (std::size_t i = 0; i < permutation.size(); ++i)
    e.sequence_value += e.exposure_probs[i] * e.item_values[i];
  return e;
}

std::uint64_t permutation_count(std::uint64_t n, std::uint64_t m) {
  if (m > n) return 0;
  std::uint64_t count = 1;
  for (std::uint64_t k = 0; k < m; ++k) {
    const std::uint64_t f = n - k;
    if (count > std::numeric_limits<std::uint64_t>::max() / f) return std::numeric_limits<std::uint64_t>::max();
    count *= f;
  }
  return count;
}

namespace {

// Candidates sorted by item id so that index order equals id order.
struct Prepared {
  std::vector<int> ids;
  std::vector<double> value;
  std::vector<double> sdr;
};

Prepared prepare(std::span<const ScoredCandidate> candidates, int m, const EnsembleWeights& weights) {
  if (m < 1) throw InputError("slate length must be >= 1");
  if (candidates.size() < static_cast<std::size_t>(m))
    throw InputError("need at least m candidates to build a slate");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return candidates[a].item_id < candidates[b].item_id; });
  Prepared p;
  for (auto i : order) {
    const auto& c = candidates[i];
    if (!p.ids.empty() && p.ids.back() == c.item_id)
      throw InputError("duplicate candidate id " + std::to_string(c.item_id));
    const double s = c.scores.sdr();
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("swipe-down rates must lie in [0, 1]");
    p.ids.push_back(c.item_id);
    p.value.push_back(item_value(c.scores, weights));
    p.sdr.push_back(s);
  }
  return p;
}

SlateEvaluation finish(const Prepared& p, std::span<const std::size_t> slate) {
  SlateEvaluation e;
  double running = 1.0;
  for (auto i : slate) {
    e.permutation.push_back(p.ids[i]);
    e.exposure_probs.push_back(running);
    e.item_values.push_back(p.value[i]);
    e.sequence_value += running * p.value[i];
    running *= p.sdr[i];
  }
  return e;
}

}  // namespace

SlateEvaluation brute_force_best(std::span<const ScoredCandidate> candidates, int m,
                                 const EnsembleWeights& weights, std::uint64_t cap) {
  const auto total = permutation_count(candidates.size(), static_cast<std::uint64_t>(std::max(m, 0)));
  if (total > cap)
    throw RefusalError("exhaustive search over " + std::to_string(total) +
                       " permutations exceeds the cap of " + std::to_string(cap) +
                       "; use beam_search instead");
  const Prepared p = prepare(candidates, m, weights);
  const std::size_t n = p.ids.size();

  std::vector<std::size_t> current, best;
  std::vector<char> used(n, 0);
  double best_value = -std::numeric_limits<double>::infinity();

  // Depth-first in lexicographic id order; only a strictly better value
  // replaces the incumbent, so exact ties keep the smallest sequence.
  auto recurse = [&](auto&& self, double value, double running) -> void {
    if (current.size() == static_cast<std::size_t>(m)) {
      if (value > best_value) {
        best_value = value;
        best = current;
      }
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      current.push_back(i);
      self(self, value + running * p.value[i], running * p.sdr[i]);
      current.pop_back();
      used[i] = 0;
    }
  };
  recurse(recurse, 0.0, 1.0);
  return finish(p, best);
}

SlateEvaluation beam_search(std::span<const ScoredCandidate> candidates, const BeamConfig& config,
                            const EnsembleWeights& weights) {
  config.validate();
  const Prepared p = prepare(candidates, config.m, weights);
  const std::size_t n = p.ids.size();
  const std::size_t width = static_cast<std::size_t>(config.beam_width);

  struct Beam {
    std::vector<std::size_t> prefix;
    double value = 0.0;
    double running = 1.0;
  };
  struct Expansion {
    double value;
    std::uint32_t beam;
    std::uint32_t item;
  };

  std::vector<Beam> beams(1);
  std::vector<Expansion> expansions;
  for (int depth = 0; depth < config.m; ++depth) {
    expansions.clear();
    for (std::uint32_t b = 0; b < beams.size(); ++b) {
      const auto& beam = beams[b];
      for (std::uint32_t i = 0; i < n; ++i) {
        if (std::find(beam.prefix.begin(), beam.prefix.end(), i) != beam.prefix.end()) continue;
        expansions.push_back({beam.value + beam.running * p.value[i], b, i});
      }
    }
    // Exact ties fall back to lexicographic order of (parent prefix, item).
    auto better = [&](const Expansion& a, const Expansion& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.beam != b.beam) {
        const auto& pa = beams[a.beam].prefix;
        const auto& pb = beams[b.beam].prefix;
        if (pa != pb) return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
      }
      return a.item < b.item;
    };
    const std::size_t keep = std::min(width, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep),
                      expansions.end(), better);
    std::vector<Beam> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const auto& e = expansions[k];
      const auto& parent = beams[e.beam];
      Beam child;
      child.prefix = parent.prefix;
      child.prefix.push_back(e.item);
      child.value = e.value;
      child.running = parent.running * p.sdr[e.item];
      next.push_back(std::move(child));
    }
    beams = std::move(next);
  }
  return finish(p, beams.front().prefix);
}

}  // namespace stcrank
