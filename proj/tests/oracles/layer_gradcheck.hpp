#ifndef HSI_TESTS_LAYER_GRADCHECK_HPP_
#define HSI_TESTS_LAYER_GRADCHECK_HPP_

// Finite-difference check of Network::backward for one layer kind on a small
// random instance. Loss: sum_k r_k y_k + 0.5 * sum_k y_k^2 over the output y.

#include <algorithm>
#include <string>
#include <vector>

#include "finite_diff.hpp"
#include "hsi/network.hpp"
#include "hsi/rng.hpp"

namespace oracle {

struct GradCheck {
  double param_error = 0.0;
  double input_error = 0.0;
  double worst() const { return std::max(param_error, input_error); }
};

struct LayerCase {
  hsi::NetworkSpec spec;
  hsi::Shape3 input;
};

inline const std::vector<std::string>& layer_kinds() {
  static const std::vector<std::string> kinds = {"conv",    "maxpool", "recurrent",
                                                 "dense",   "softmax", "dropout",
                                                 "upsample", "reshape"};
  return kinds;
}

inline LayerCase make_case(const std::string& kind, hsi::Rng& rng) {
  using hsi::LayerSpec;
  LayerCase c;
  c.spec.pool_after_conv = false;
  const auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(hsi::uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
  };
  if (kind == "conv") {
    c.input = {pick(2, 4), pick(2, 4), pick(1, 3)};
    auto l = LayerSpec::conv(pick(1, 3), pick(1, 3));
    l.relu = hsi::uniform01(rng) < 0.5;
    c.spec.layers = {l};
  } else if (kind == "maxpool") {
    c.input = {pick(2, 5), pick(2, 5), pick(1, 3)};
    c.spec.layers = {LayerSpec::maxpool(false)};
  } else if (kind == "recurrent") {
    c.input = {pick(1, 2), pick(1, 2), pick(2, 4)};
    c.spec.layers = {LayerSpec::recurrent(pick(1, 3))};
  } else if (kind == "dense") {
    c.input = {1, 1, pick(2, 5)};
    c.spec.layers = {LayerSpec::dense(pick(1, 4), hsi::uniform01(rng) < 0.5)};
  } else if (kind == "softmax") {
    c.input = {1, 1, pick(2, 5)};
    c.spec.layers = {LayerSpec::softmax(pick(2, 4))};
  } else if (kind == "dropout") {
    c.input = {1, 1, pick(3, 6)};
    c.spec.layers = {LayerSpec::dense(4, false), LayerSpec::dropout(0.5),
                     LayerSpec::dense(3, false)};
  } else if (kind == "upsample") {
    const hsi::Shape3 in{pick(1, 2), pick(1, 2), pick(1, 2)};
    c.input = in;
    c.spec.layers = {LayerSpec::upsample({2 * in.h + pick(0, 1), 2 * in.w + pick(0, 1), in.c})};
  } else if (kind == "reshape") {
    c.input = {1, 1, 8};
    c.spec.layers = {LayerSpec::reshape({2, 2, 2}), LayerSpec::conv(3, 2)};
    c.spec.layers.back().relu = false;
  }
  c.spec.input_bands = c.input.c;
  return c;
}

inline GradCheck check_layer(const std::string& kind, std::uint64_t seed) {
  hsi::Rng rng(seed);
  LayerCase lc = make_case(kind, rng);
  hsi::Network net(lc.spec, lc.input);
  hsi::ParamStore params = hsi::init_params(lc.spec, lc.input, seed + 1);
  // Nonzero biases so rectifiers and pools see generic inputs.
  for (auto& layer : params.layers) {
    for (auto& t : layer) {
      for (auto& v : t.data) v += 0.1 * hsi::normal(rng);
    }
  }
  std::vector<double> x(lc.input.size());
  for (auto& v : x) v = hsi::normal(rng);
  std::vector<double> r(net.output_shape().size());
  for (auto& v : r) v = hsi::normal(rng);
  const std::uint64_t mask_seed = seed + 7;

  const auto loss = [&]() {
    hsi::Rng mask_rng(mask_seed);
    const auto tr = net.forward(params, x, hsi::DropoutMode::kSample, &mask_rng);
    const auto& y = tr.acts.back();
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += r[k] * y[k] + 0.5 * y[k] * y[k];
    return s;
  };

  hsi::Rng mask_rng(mask_seed);
  const auto tr = net.forward(params, x, hsi::DropoutMode::kSample, &mask_rng);
  hsi::GradSeeds seeds(net.num_taps());
  const auto& y = tr.acts.back();
  seeds.taps.back().resize(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) seeds.taps.back()[k] = r[k] + y[k];
  hsi::ParamStore grads = params.zeros_like();
  std::vector<double> gx;
  net.backward(params, tr, seeds, grads, 0, &gx);

  GradCheck out;
  std::vector<double> analytic, numeric;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t t = 0; t < params.layers[l].size(); ++t) {
      auto& data = params.layers[l][t].data;
      const auto fd = central_diff(data, loss);
      numeric.insert(numeric.end(), fd.begin(), fd.end());
      const auto& g = grads.layers[l][t].data;
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
  }
  out.param_error = analytic.empty() ? 0.0 : relative_error(analytic, numeric);
  out.input_error = relative_error(gx, central_diff(x, loss));
  return out;
}

}  // namespace oracle

#endif  // HSI_TESTS_LAYER_GRADCHECK_HPP_
