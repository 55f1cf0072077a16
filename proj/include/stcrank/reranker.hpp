#pragma once

#include "stcrank/ranker.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stcrank {

struct SlateEvaluation {
  std::vector<int> permutation;
  std::vector<double> exposure_probs;
  std::vector<double> item_values;
  double sequence_value = 0.0;
};

struct BeamConfig {
  int beam_width = 25;
  int m = 5;

  void validate() const;
};

inline constexpr std::uint64_t kDefaultPermutationCap = 1'000'000;

/// p[0] = 1 and p[i] = p[i-1] * sdr[i-1]: the chance the user swipes far
/// enough to see position i.
std::vector<double> exposure_probs(std::span<const double> sdr_by_position);

/// Evaluates a slate with position-independent item scores.
SlateEvaluation sequence_value(std::span<const int> permutation,
                               std::span<const ScoredCandidate> candidates,
                               const EnsembleWeights& weights);

/// A(n, m) = n! / (n - m)!, saturating at UINT64_MAX.
std::uint64_t permutation_count(std::uint64_t n, std::uint64_t m);

/// Exact best slate over all ordered m-subsets. Ties resolve to the
/// lexicographically smallest item-id sequence.
SlateEvaluation brute_force_best(std::span<const ScoredCandidate> candidates, int m,
                                 const EnsembleWeights& weights,
                                 std::uint64_t cap = kDefaultPermutationCap);

/// Keeps the beam_width best prefixes (by exact partial sequence value) at
/// every length; same tie-break as brute_force_best.
SlateEvaluation beam_search(std::span<const ScoredCandidate> candidates, const BeamConfig& config,
                            const EnsembleWeights& weights);

}  // namespace stcrank
