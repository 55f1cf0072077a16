#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stcrank {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double measured = 0.0;  // suite-specific headline number
};

/// Floor for beam / brute-force value at B = 25, n = 8, m = 4, with vtr, cvr
/// and sdr drawn uniformly from [0, 1] and weights from [0.05, 2].
/// Measured: the worst of 500 draws is 0.850 for the default suite seed and
/// 0.88 to 0.94 for seeds 1 to 3. About 1% of draws land below 0.98, so
/// the floor is not met; see README.
inline constexpr double kBeamQualityFloor = 0.98;

/// Beam search with a width covering every partial sequence equals brute
/// force in value (1e-12) and permutation, for n in 5..8 and m in 2..4.
SuiteResult beam_matches_brute_force(std::uint64_t seed, int draws = 500);

/// Worst beam / brute-force value ratio at the given width.
SuiteResult beam_quality(std::uint64_t seed, int beam_width = 25, int n = 8, int m = 4, int draws = 500,
                         double floor = kBeamQualityFloor);

/// brute_force_best agrees with an independent enumeration of ordered subsets.
SuiteResult brute_force_matches_enumeration(std::uint64_t seed, int draws = 200);

SuiteResult auc_matches_pairwise(std::uint64_t seed, int instances = 100);
SuiteResult bce_gradient_matches_finite_differences(std::uint64_t seed, int instances = 20);
SuiteResult spearman_matches_rank_then_pearson(std::uint64_t seed, int instances = 100);
SuiteResult exposure_probs_properties(std::uint64_t seed, int inputs = 10000);
SuiteResult tune_objective_matches_pairwise(std::uint64_t seed, int instances = 50);
SuiteResult hitrate_matches_set_count(std::uint64_t seed, int instances = 500);

std::vector<SuiteResult> run_oracle_suites(std::uint64_t seed = 20240601);

}  // namespace stcrank
