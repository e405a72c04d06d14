#ifndef HSI_SRC_TRAIN_COMMON_HPP_
#define HSI_SRC_TRAIN_COMMON_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hsi/network.hpp"
#include "hsi/params.hpp"
#include "hsi/rng.hpp"
#include "hsi/trainers.hpp"

namespace hsi::detail {

// Stream ids for mix_seed so every consumer of a seed draws independently.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kOrderStream = 2,
  kDropoutStream = 3,
  kReconStream = 4,
  kDecoderInitStream = 5,
  kHeadInitStream = 6,
  kProjectionStream = 7,
  kPadStream = 8,
  kClusterStream = 9,
};

// Plain SGD with optional heavy-ball momentum.
class Sgd {
 public:
  Sgd(const ParamStore& like, double rate, double momentum)
      : rate_(rate), momentum_(momentum), velocity_(like.zeros_like()) {}

  // params -= rate * scale * grads, for layers [first, end).
  void step(ParamStore& params, const ParamStore& grads, double scale, std::size_t first = 0) {
    if (momentum_ == 0.0) {
      params.add_scaled(grads, -rate_ * scale, first);
      return;
    }
    for (std::size_t l = first; l < params.layers.size(); ++l) {
      for (std::size_t t = 0; t < params.layers[l].size(); ++t) {
        auto& v = velocity_.layers[l][t].data;
        const auto& g = grads.layers[l][t].data;
        auto& p = params.layers[l][t].data;
        for (std::size_t k = 0; k < p.size(); ++k) {
          v[k] = momentum_ * v[k] - rate_ * scale * g[k];
          p[k] += v[k];
        }
      }
    }
  }

 private:
  double rate_;
  double momentum_;
  ParamStore velocity_;
};

inline void require_finite(double value, const std::string& what, int epoch) {
  if (!std::isfinite(value)) {
    throw TrainingError(what + " became non-finite at epoch " + std::to_string(epoch));
  }
}

inline std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order,
                                                        int batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + i,
                     order.begin() + std::min(order.size(), i + static_cast<std::size_t>(batch_size)));
  }
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Reconstruction branch attached to the trunk output tap.
struct ReconSetup {
  const Network* decoder = nullptr;
  ParamStore* decoder_params = nullptr;
  const PatchSet* pool = nullptr;
  double lambda = 0.0;
  int tap = 0;
};

// Mini-batch SGD on cross entropy. Layers below stop_layer stay fixed.
TrainedModel fit_classifier(const NetworkSpec& spec, Shape3 input, ParamStore params,
                            const PatchSet& labeled, const TrainConfig& cfg, int stop_layer,
                            ReconSetup* recon = nullptr);

}  // namespace hsi::detail

#endif  // HSI_SRC_TRAIN_COMMON_HPP_
