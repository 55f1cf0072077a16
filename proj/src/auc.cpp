#include "stcrank/error.hpp"
#include "stcrank/predictor.hpp"

#include <algorithm>
#include <numeric>

namespace stcrank {

double auc_presorted(std::span<const double> scores, std::span<const int> labels,
                     std::span<const double> weights, std::span<const std::uint32_t> order) {
  const bool weighted = !weights.empty();
  auto weight = [&](std::size_t i) { return weighted ? weights[i] : 1.0; };

  // Walk groups of tied scores from the lowest up. Every positive earns full
  // credit for the negative weight strictly below and half for its own group.
  double neg_below = 0.0, pos_total = 0.0, credit = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const auto k = order[j];
      (labels[k] == 1 ? pos : neg) += weight(k);
      ++j;
    }
    credit += pos * (neg_below + 0.5 * neg);
    neg_below += neg;
    pos_total += pos;
    i = j;
  }
  if (!(pos_total > 0.0) || !(neg_below > 0.0))
    throw DegenerateError("AUC needs at least one positive and one negative with positive weight");
  return credit / (pos_total * neg_below);
}

double auc(std::span<const double> scores, std::span<const int> labels,
           std::span<const double> weights) {
  if (scores.size() != labels.size() || (!weights.empty() && weights.size() != scores.size()))
    throw InputError("AUC inputs must have equal lengths");
  for (int y : labels)
    if (y != 0 && y != 1) throw InputError("AUC labels must be binary");
  for (double w : weights)
    if (!(w >= 0.0)) throw InputError("AUC weights must be non-negative");
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  return auc_presorted(scores, labels, weights, order);
}

}  // namespace stcrank
