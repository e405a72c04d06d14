#include "hsi/inference.hpp"

#include <algorithm>

namespace hsi {

Shape3 patch_shape(const PatchSet& patches) {
  return {patches.window, patches.window, patches.bands};
}

Matrix predict_probs(const Network& net, const ParamStore& params, const PatchSet& patches) {
  if (!net.spec().ends_in_softmax()) throw StructureError("network has no softmax output");
  Matrix out(patches.size(), static_cast<std::size_t>(net.spec().num_classes()));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Trace tr = net.forward(params, patches.sample(i), DropoutMode::kOff, nullptr);
    std::copy(tr.acts.back().begin(), tr.acts.back().end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> predict_labels(const Network& net, const ParamStore& params,
                                const PatchSet& patches) {
  const Matrix probs = predict_probs(net, params, patches);
  std::vector<int> labels(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const auto r = probs.row(i);
    labels[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) + 1;
  }
  return labels;
}

Matrix features_at(const Network& net, const ParamStore& params, const PatchSet& patches,
                   int tap) {
  if (tap < 0 || tap >= static_cast<int>(net.num_taps())) {
    throw ArgumentError("tap " + std::to_string(tap) + " out of range");
  }
  Matrix out(patches.size(), net.shapes()[tap].size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Trace tr = net.forward_to(params, patches.sample(i), DropoutMode::kOff, nullptr, tap);
    std::copy(tr.acts[tap].begin(), tr.acts[tap].end(), out.row(i).begin());
  }
  return out;
}

bool has_dropout_after_each_conv(const NetworkSpec& spec) {
  const auto& ls = spec.layers;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (ls[i].kind != LayerKind::kConv) continue;
    bool found = false;
    for (std::size_t j = i + 1; j < ls.size(); ++j) {
      if (ls[j].kind == LayerKind::kDropout) {
        found = true;
        break;
      }
      if (ls[j].kind != LayerKind::kMaxPool) break;
    }
    if (!found) return false;
  }
  return true;
}

std::vector<McPrediction> mc_forward(const Network& net, const ParamStore& params,
                                     const PatchSet& batch, int passes, std::uint64_t seed) {
  if (passes < 1) throw ArgumentError("mc_forward needs at least one pass");
  const auto& spec = net.spec();
  if (!spec.ends_in_softmax()) throw StructureError("mc_forward needs a softmax output");
  if (!has_dropout_after_each_conv(spec)) {
    throw StructureError("mc_forward needs a dropout layer after each convolution");
  }
  const bool stochastic = std::any_of(spec.layers.begin(), spec.layers.end(), [](const LayerSpec& l) {
    return l.kind == LayerKind::kDropout && l.rate > 0.0;
  });
  const int effective = stochastic ? passes : 1;
  const std::size_t C = static_cast<std::size_t>(spec.num_classes());
  std::vector<McPrediction> out(batch.size());
  Rng rng(mix_seed(seed, 0x3C));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& pred = out[i];
    pred.mean_probs.assign(C, 0.0);
    double mean_entropy = 0.0;
    for (int t = 0; t < effective; ++t) {
      const Trace tr = net.forward(params, batch.sample(i), DropoutMode::kSample, &rng);
      const auto& p = tr.acts.back();
      for (std::size_t k = 0; k < C; ++k) pred.mean_probs[k] += p[k];
      mean_entropy += entropy(p);
    }
    if (effective > 1) {
      for (auto& v : pred.mean_probs) v /= effective;
      mean_entropy /= effective;
    }
    pred.entropy = entropy(pred.mean_probs);
    pred.mutual_information = pred.entropy - mean_entropy;
  }
  return out;
}

}  // namespace hsi
