#ifndef HSI_PARAMS_HPP_
#define HSI_PARAMS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsi/netspec.hpp"

namespace hsi {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> dims);
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

// Weights per layer, in layer order. Layers without parameters hold no tensors.
//   conv:      kernel [K, K, C_in, F], bias [F]
//   dense:     weight [N_in, U], bias [U]
//   softmax:   weight [N_in, C], bias [C]
//   recurrent: input weight [M, 3D], state weight [D, 3D], bias [3D]
//              (gate blocks ordered update, reset, candidate)
struct ParamStore {
  std::vector<std::vector<Tensor>> layers;
  std::uint64_t seed = 0;

  std::size_t count() const;
  ParamStore zeros_like() const;
  void set_zero();
  // this += scale * other, optionally restricted to layers [first, last).
  void add_scaled(const ParamStore& other, double scale, std::size_t first = 0,
                  std::size_t last = SIZE_MAX);
  bool all_finite() const;
  // FNV-1a over the raw bytes of layers [first, last).
  std::uint64_t checksum(std::size_t first = 0, std::size_t last = SIZE_MAX) const;
  bool operator==(const ParamStore&) const = default;
};

// Variance-scaled uniform weights (limit sqrt(6 / fan_in) for rectified
// layers, sqrt(3 / fan_in) otherwise), zero biases. Deterministic in seed.
ParamStore init_params(const NetworkSpec& spec, Shape3 input, std::uint64_t seed);

// Checkpoint = JSON manifest (shapes, offsets, caller metadata) + a raw
// little-endian float64 payload next to it (<manifest stem>.bin).
void write_checkpoint(const std::filesystem::path& manifest_path, nlohmann::json meta,
                      const std::map<std::string, ParamStore>& blocks);
struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, ParamStore> blocks;
};
Checkpoint read_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace hsi

#endif  // HSI_PARAMS_HPP_
