#ifndef HSI_NETWORK_HPP_
#define HSI_NETWORK_HPP_

#include <span>
#include <vector>

#include "hsi/netspec.hpp"
#include "hsi/params.hpp"
#include "hsi/rng.hpp"

namespace hsi {

enum class DropoutMode { kOff, kSample };

// Everything a backward pass needs from one forward pass of one sample.
struct Trace {
  std::vector<std::vector<double>> acts;  // acts[0] input, acts[i + 1] layer i output
  std::vector<std::vector<double>> aux;   // masks, logits, recurrent gate states
  std::vector<std::vector<int>> argmax;   // pooling winners
};

// Gradient seeds for a backward pass. taps[i] (if nonempty) is added to the
// gradient of acts[i]. A nonempty `logits` replaces the gradient flowing into
// a final softmax layer with one taken w.r.t. its pre-activations.
struct GradSeeds {
  std::vector<std::vector<double>> taps;
  std::vector<double> logits;

  explicit GradSeeds(std::size_t num_taps) : taps(num_taps) {}
};

// A NetworkSpec bound to an input shape. Conv layers use same-size zero
// padding and stride 1; pooling is 2x2/stride 2 and is skipped once the
// spatial extent drops below 2; recurrent layers run a GRU over the channel
// axis (one step per channel, the spatial map as the step input) and emit
// the final state.
class Network {
 public:
  Network(NetworkSpec spec, Shape3 input);

  const NetworkSpec& spec() const { return spec_; }
  Shape3 input_shape() const { return shapes_.front(); }
  Shape3 output_shape() const { return shapes_.back(); }
  const std::vector<Shape3>& shapes() const { return shapes_; }
  int num_layers() const { return static_cast<int>(spec_.layers.size()); }
  std::size_t num_taps() const { return shapes_.size(); }

  Trace forward(const ParamStore& params, std::span<const double> x, DropoutMode mode,
                Rng* rng) const;
  // Forward up to and including tap `last_tap`.
  Trace forward_to(const ParamStore& params, std::span<const double> x, DropoutMode mode,
                   Rng* rng, int last_tap) const;

  // Accumulates parameter gradients into `grads` for layers >= stop_layer.
  // When `input_grad` is given, the gradient w.r.t. the input is written to it
  // (requires stop_layer == 0).
  void backward(const ParamStore& params, const Trace& trace, GradSeeds& seeds,
                ParamStore& grads, int stop_layer = 0,
                std::vector<double>* input_grad = nullptr) const;

 private:
  NetworkSpec spec_;
  std::vector<Shape3> shapes_;
};

// Gradient of -log p[label] w.r.t. softmax logits: p - onehot(label).
std::vector<double> cross_entropy_logit_grad(std::span<const double> probs, int label_index);

double entropy(std::span<const double> probs);

}  // namespace hsi

#endif  // HSI_NETWORK_HPP_
