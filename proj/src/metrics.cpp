#include "agenda/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace agenda {

double auc(std::span<const double> scores, std::span<const UserType> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with mid-ranks for ties.
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const double mid_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (labels[order[k]] == UserType::plus) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    }
    lo = hi + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auc: both classes must be present");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double accuracy(std::span<const UserType> predicted, std::span<const UserType> labels) {
  if (predicted.size() != labels.size()) throw Error("accuracy: length mismatch");
  if (predicted.empty()) throw Error("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) hits += predicted[k] == labels[k];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace agenda
