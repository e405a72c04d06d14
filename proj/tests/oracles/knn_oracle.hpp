#ifndef HSI_TESTS_KNN_ORACLE_HPP_
#define HSI_TESTS_KNN_ORACLE_HPP_

// Exhaustive neighbour scan for pseudo-label expansion: full sort of every
// in-radius labeled sample, no partial selection.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hsi/cube.hpp"

namespace oracle {

// pool index -> promoted label
inline std::map<std::size_t, int> knn_promotions(const hsi::PatchSet& labeled,
                                                 const hsi::PatchSet& pool, int k,
                                                 double radius) {
  std::map<std::size_t, int> out;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    struct Cand {
      double dist;
      std::size_t index;
    };
    std::vector<Cand> all;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const double dr = labeled.coords[i].first - pool.coords[p].first;
      const double dc = labeled.coords[i].second - pool.coords[p].second;
      if (std::sqrt(dr * dr + dc * dc) > radius) continue;
      double d = 0.0;
      const auto a = labeled.center(i);
      const auto b = pool.center(p);
      for (std::size_t q = 0; q < a.size(); ++q) d += (a[q] - b[q]) * (a[q] - b[q]);
      all.push_back({d, i});
    }
    if (static_cast<int>(all.size()) < k) continue;
    std::stable_sort(all.begin(), all.end(),
                     [](const Cand& x, const Cand& y) { return x.dist < y.dist; });
    const int c = labeled.labels[all[0].index];
    bool same = true;
    for (int q = 0; q < k; ++q) same = same && labeled.labels[all[q].index] == c;
    if (same) out[p] = c;
  }
  return out;
}

// Number of unordered pairs with equal / unequal labels.
inline std::pair<std::size_t, std::size_t> pair_counts(const std::vector<int>& labels) {
  std::map<int, std::size_t> per;
  for (int y : labels) ++per[y];
  const std::size_t n = labels.size();
  std::size_t same = 0;
  for (const auto& [y, m] : per) same += m * (m - 1) / 2;
  return {same, n * (n - 1) / 2 - same};
}

}  // namespace oracle

#endif  // HSI_TESTS_KNN_ORACLE_HPP_
