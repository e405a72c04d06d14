#include "hsi/split.hpp"

#include <algorithm>

#include "hsi/rng.hpp"

namespace hsi {

SplitSpec split_labels(const LabelMap& labels, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw ArgumentError("per_class must be at least 1");
  SplitSpec split;
  split.per_class = per_class;
  split.seed = seed;
  Rng rng(mix_seed(seed, 0x5A17));
  std::vector<std::vector<std::size_t>> by_class(labels.num_classes() + 1);
  const auto& classes = labels.classes();
  for (std::size_t p = 0; p < classes.size(); ++p) {
    if (classes[p] != 0) by_class[classes[p]].push_back(p);
  }
  for (int c = 1; c <= labels.num_classes(); ++c) {
    auto& pixels = by_class[c];
    if (static_cast<int>(pixels.size()) < per_class) {
      throw SplitError("class '" + labels.name_of(c) + "' has " +
                       std::to_string(pixels.size()) + " labeled pixels, need " +
                       std::to_string(per_class));
    }
    shuffle(pixels, rng);
    split.train_indices.insert(split.train_indices.end(), pixels.begin(),
                               pixels.begin() + per_class);
    split.test_indices.insert(split.test_indices.end(), pixels.begin() + per_class,
                              pixels.end());
  }
  if (split.test_indices.empty()) {
    throw SplitError("split leaves no test pixels");
  }
  std::sort(split.test_indices.begin(), split.test_indices.end());
  return split;
}

}  // namespace hsi
