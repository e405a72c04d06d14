#ifndef HSI_PATCHES_HPP_
#define HSI_PATCHES_HPP_

#include <span>

#include "hsi/cube.hpp"

namespace hsi {

enum class PixelSelection { kLabeled, kAll };

// One window x window patch per selected pixel, centered on it, with mirror
// padding at the borders (reflect without repeating the edge pixel).
// Patch label is the center pixel's label.
PatchSet extract_patches(const HyperCube& cube, const LabelMap& labels, int window,
                         PixelSelection which, Domain domain = Domain::kSource);

// Same, for an explicit list of row-major pixel indices.
PatchSet extract_patches_at(const HyperCube& cube, const LabelMap& labels,
                            int window, std::span<const std::size_t> pixels,
                            Domain domain = Domain::kSource);

// Reflect index into [0, n) (… 2 1 | 0 1 2 … n-1 | n-2 …).
int mirror_index(int i, int n);

}  // namespace hsi

#endif  // HSI_PATCHES_HPP_
