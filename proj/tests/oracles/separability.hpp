#ifndef HSI_TESTS_ORACLES_SEPARABILITY_HPP_
#define HSI_TESTS_ORACLES_SEPARABILITY_HPP_

#include <cstddef>
#include <vector>

namespace oracle {

// Batch perceptron on {-1, +1} targets with a bias. Returns true once an
// epoch passes without a mistake, which certifies linear separability.
inline bool linearly_separable(const std::vector<std::vector<double>>& x,
                               const std::vector<int>& y, int max_epochs = 10000) {
  const std::size_t d = x.empty() ? 0 : x[0].size();
  std::vector<double> w(d + 1, 0.0);
  for (int e = 0; e < max_epochs; ++e) {
    int mistakes = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double s = w[d];
      for (std::size_t k = 0; k < d; ++k) s += w[k] * x[i][k];
      const double t = y[i] > 0 ? 1.0 : -1.0;
      if (s * t <= 0.0) {
        ++mistakes;
        for (std::size_t k = 0; k < d; ++k) w[k] += t * x[i][k];
        w[d] += t;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

}  // namespace oracle

#endif  // HSI_TESTS_ORACLES_SEPARABILITY_HPP_
