#ifndef HSI_INFERENCE_HPP_
#define HSI_INFERENCE_HPP_

#include <cstdint>
#include <vector>

#include "hsi/cube.hpp"
#include "hsi/network.hpp"

namespace hsi {

// Row-major N x dim matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

Shape3 patch_shape(const PatchSet& patches);

// Deterministic (dropout off) evaluation.
Matrix predict_probs(const Network& net, const ParamStore& params, const PatchSet& patches);
std::vector<int> predict_labels(const Network& net, const ParamStore& params,
                                const PatchSet& patches);  // 1-based class ids
Matrix features_at(const Network& net, const ParamStore& params, const PatchSet& patches,
                   int tap);

struct McPrediction {
  std::vector<double> mean_probs;
  double entropy = 0.0;             // H(mean probabilities)
  double mutual_information = 0.0;  // H(mean) - mean per-pass entropy
};

// True when every convolution is followed (after its pooling) by a dropout
// layer before the next parameterised layer.
bool has_dropout_after_each_conv(const NetworkSpec& spec);

// Monte Carlo dropout: T stochastic passes with masks resampled per pass.
// Networks with no active dropout are evaluated once (all passes identical).
std::vector<McPrediction> mc_forward(const Network& net, const ParamStore& params,
                                     const PatchSet& batch, int passes, std::uint64_t seed);

}  // namespace hsi

#endif  // HSI_INFERENCE_HPP_
