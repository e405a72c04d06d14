#ifndef HSI_AUGMENT_HPP_
#define HSI_AUGMENT_HPP_

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hsi/cube.hpp"

namespace hsi {

// One spatial-spectral sample, height x width x bands in (row, col, band) order.
struct Sample {
  int height = 1;
  int width = 1;
  int bands = 0;
  std::vector<double> values;
  int label = 0;
  bool reflectance = true;

  bool operator==(const Sample&) const = default;
};

Sample sample_of(const PatchSet& patches, std::size_t i, bool reflectance = true);

using Range = std::pair<double, double>;

struct AugmentPlan {
  bool dihedral = false;
  std::optional<Range> scale_range;
  std::optional<Range> mix_weight_range;
  std::optional<Range> occlusion_fraction_range;
  int block_window = 3;
  int knn_k = 0;  // 0 disables pseudo expansion
  double knn_radius = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Element k in 0..7: rotation by (k % 4) quarter turns, then a horizontal
// flip when k >= 4. dihedral(s, 0) is the identity.
Sample dihedral(const Sample& s, int k);
std::vector<Sample> dihedral_variants(const Sample& s);

Sample virtual_scale(const Sample& s, double factor);
Sample virtual_mix(const Sample& s1, const Sample& s2, double weight);

// Erased rectangle size for a fraction of an h x w window: the rectangle
// whose area is closest to round(fraction * h * w), preferring squarer ones.
std::pair<int, int> occlusion_extent(int height, int width, double fraction);
Sample random_occlusion(const Sample& s, double fraction, std::uint64_t seed);

constexpr int kDifferentPair = -1;

struct BlockPair {
  std::size_t first;
  std::size_t second;
  int label;  // shared class id, or kDifferentPair
  bool operator==(const BlockPair&) const = default;
};

// All index pairs i < j of a labeled block set, then same-class and
// different-class pairs balanced by randomly downsampling the larger group.
std::vector<BlockPair> block_pairs(const PatchSet& blocks, int block_window, std::uint64_t seed);

struct Expansion {
  PatchSet samples;                       // promoted pool samples with their new labels
  std::vector<std::size_t> pool_indices;  // where they came from, ascending
};

// A pool sample is promoted to class c when its k nearest labeled samples
// (Euclidean distance between center spectra, restricted to labeled samples
// within `radius` pixels) all carry label c. Ties in distance go to the lower
// labeled index.
Expansion knn_pseudo_expand(const PatchSet& labeled, const PatchSet& pool, int k,
                            double radius);

// Labeled set enlarged by every enabled op. Pseudo expansion needs a pool.
PatchSet apply_plan(const PatchSet& labeled, const AugmentPlan& plan,
                    const PatchSet* pool = nullptr, bool reflectance = true);

}  // namespace hsi

#endif  // HSI_AUGMENT_HPP_
