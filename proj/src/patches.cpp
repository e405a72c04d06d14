#include "hsi/patches.hpp"

#include <vector>

namespace hsi {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

PatchSet extract_patches_at(const HyperCube& cube, const LabelMap& labels, int window,
                            std::span<const std::size_t> pixels, Domain domain) {
  check_paired(cube, labels);
  if (window < 1 || window % 2 == 0) {
    throw ArgumentError("patch window must be a positive odd integer, got " +
                        std::to_string(window));
  }
  if (window > std::min(cube.height(), cube.width())) {
    throw ArgumentError("patch window " + std::to_string(window) + " exceeds image size");
  }
  PatchSet out;
  out.window = window;
  out.bands = cube.bands();
  out.domain = domain;
  out.data.reserve(pixels.size() * out.sample_size());
  out.labels.reserve(pixels.size());
  out.coords.reserve(pixels.size());
  const int half = window / 2;
  const std::size_t plane = static_cast<std::size_t>(cube.height()) * cube.width();
  for (std::size_t p : pixels) {
    if (p >= plane) throw ArgumentError("pixel index out of range");
    const int row = static_cast<int>(p / cube.width());
    const int col = static_cast<int>(p % cube.width());
    for (int dr = -half; dr <= half; ++dr) {
      const int r = mirror_index(row + dr, cube.height());
      for (int dc = -half; dc <= half; ++dc) {
        const int c = mirror_index(col + dc, cube.width());
        for (float v : cube.spectrum(r, c)) out.data.push_back(v);
      }
    }
    out.labels.push_back(labels.at(row, col));
    out.coords.emplace_back(row, col);
  }
  return out;
}

PatchSet extract_patches(const HyperCube& cube, const LabelMap& labels, int window,
                         PixelSelection which, Domain domain) {
  check_paired(cube, labels);
  std::vector<std::size_t> pixels;
  const auto& classes = labels.classes();
  for (std::size_t p = 0; p < classes.size(); ++p) {
    if (which == PixelSelection::kAll || classes[p] != 0) pixels.push_back(p);
  }
  return extract_patches_at(cube, labels, window, pixels, domain);
}

}  // namespace hsi
