#ifndef HSI_NETSPEC_HPP_
#define HSI_NETSPEC_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsi/error.hpp"

namespace hsi {

// Activation shape: spatial height x width x channels. Flat vectors are 1x1xN.
struct Shape3 {
  int h = 1;
  int w = 1;
  int c = 1;

  std::size_t size() const { return static_cast<std::size_t>(h) * w * c; }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(Shape3 s);

enum class LayerKind {
  kConv,
  kMaxPool,
  kRecurrent,
  kDense,
  kSoftmax,
  kDropout,
  kUpsample,  // decoder only: nearest-neighbour unpooling to `target`
  kReshape,   // decoder only: flat vector to `target`
};

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int kernel = 0;
  int filters = 0;
  int state_dim = 0;
  int units = 0;
  int classes = 0;
  double rate = 0.0;
  Shape3 target{};
  bool relu = true;       // conv/dense: rectify the output
  bool implicit = false;  // maxpool inserted by the parser

  static LayerSpec conv(int kernel, int filters);
  static LayerSpec maxpool(bool implicit = true);
  static LayerSpec recurrent(int state_dim);
  static LayerSpec dense(int units, bool relu = true);
  static LayerSpec softmax(int classes);
  static LayerSpec dropout(double rate);
  static LayerSpec upsample(Shape3 target);
  static LayerSpec reshape(Shape3 target);

  bool has_params() const;
  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  int input_bands = 0;
  std::vector<LayerSpec> layers;
  bool pool_after_conv = true;

  bool ends_in_softmax() const;
  int num_classes() const;  // softmax width, 0 without a softmax tail
  bool has_recurrent() const;
  bool has_dropout() const;
  // Number of parameterised layers before the softmax tail.
  int trunk_depth() const;
  // Index of the layer holding the n-th (1-based) trunk parameter block.
  int trunk_layer_index(int n) const;
  bool operator==(const NetworkSpec&) const = default;
};

struct ParseOptions {
  bool insert_pool = true;  // add a maxpool after every conv
};

// Grammar: tokens joined by "→" or "->": input-N, convK-F, recur-D, fc-U,
// softmax-C, dropout-R. "fully connected-U" is accepted for fc-U.
NetworkSpec parse_config(std::string_view text, ParseOptions options = {});
std::string render_config(const NetworkSpec& spec);
void validate(const NetworkSpec& spec);

// Activation shapes: result[0] is the input, result[i + 1] the output of layer i.
std::vector<Shape3> infer_shapes(const NetworkSpec& spec, Shape3 input);

// "conv1", "pool1", "recur2", "fc1", "softmax", "dropout1", ...
std::string layer_name(const NetworkSpec& spec, int index);
// Tap index for a name: "input" -> 0, "conv1" -> its layer index + 1, or a
// plain integer tap index. Throws ArgumentError for unknown names.
int find_tap(const NetworkSpec& spec, std::string_view name);

// Two branches whose corresponding layers are tied by alignment terms, plus a
// classification head over the concatenated aligned features.
struct FannSpec {
  std::string architecture;  // "CRNN" in "CRNN (Street) → DATL ← CRNN (Aerial)"
  std::string source_name;
  std::string target_name;
  NetworkSpec source_branch;
  NetworkSpec target_branch;
  std::vector<std::pair<int, int>> aligned_layer_ids;  // layer indices
  NetworkSpec head;  // input_bands = 0 until the feature width is known

  int num_classes() const { return head.num_classes(); }
};

// Rows separated by newlines or ';':
//   CRNN (Street) → DATL ← CRNN (Aerial)          optional header
//   (conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)
//   recur-64 → DATL ← recur-128
//   fully connected-12                           head, last token is softmax
// The left side is the source branch.
FannSpec parse_fann_config(std::string_view text, int source_bands, int target_bands);
std::string render_fann_config(const FannSpec& spec);
void validate(const FannSpec& spec);

struct DecoderSpec {
  NetworkSpec spec;
  Shape3 input;   // deepest encoder activation
  Shape3 output;  // encoder input
};

// Reverses a feedforward trunk: dense -> dense, pool -> upsample,
// conv -> conv back to the preceding channel count. The last layer is linear.
DecoderSpec mirrored_decoder(const NetworkSpec& encoder, Shape3 input);

}  // namespace hsi

#endif  // HSI_NETSPEC_HPP_
