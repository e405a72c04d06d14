#ifndef HSI_TESTS_DATL_INSTANCES_HPP_
#define HSI_TESTS_DATL_INSTANCES_HPP_

#include <vector>

#include "datl_oracle.hpp"
#include "hsi/datl.hpp"
#include "hsi/rng.hpp"

namespace oracle {

struct DatlInstance {
  hsi::FeatureBatch source;
  hsi::FeatureBatch target;
  double beta = 0.5;
};

inline hsi::FeatureBatch random_batch(hsi::Domain domain, std::size_t n, std::size_t d, int classes,
                                      hsi::Rng& rng, double spread) {
  hsi::FeatureBatch b;
  b.domain = domain;
  b.features = hsi::Matrix(n, d);
  for (auto& v : b.features.data) v = spread * hsi::normal(rng);
  b.labels.resize(n);
  // Cycle through the classes first so small batches still cover several.
  const auto order = hsi::permutation(n, rng);
  for (std::size_t i = 0; i < n; ++i) b.labels[order[i]] = 1 + static_cast<int>(i % classes);
  return b;
}

// N <= 8 per domain, d <= 4, C in {2, 3}.
inline DatlInstance random_instance(std::uint64_t seed) {
  hsi::Rng rng(seed);
  const int classes = 2 + static_cast<int>(hsi::uniform_index(rng, 2));
  const std::size_t d = 1 + hsi::uniform_index(rng, 4);
  const std::size_t ns = 3 + hsi::uniform_index(rng, 6);
  const std::size_t nt = 3 + hsi::uniform_index(rng, 6);
  DatlInstance inst;
  inst.source = random_batch(hsi::Domain::kSource, ns, d, classes, rng, 1.0);
  inst.target = random_batch(hsi::Domain::kTarget, nt, d, classes, rng, 1.0);
  inst.beta = hsi::uniform01(rng);
  return inst;
}

inline Rows rows_of(const hsi::Matrix& m) {
  Rows r(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) r[i].assign(m.row(i).begin(), m.row(i).end());
  return r;
}

}  // namespace oracle

#endif  // HSI_TESTS_DATL_INSTANCES_HPP_
