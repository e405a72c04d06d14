#ifndef HSI_SPLIT_HPP_
#define HSI_SPLIT_HPP_

#include <cstdint>

#include "hsi/cube.hpp"

namespace hsi {

// Uniform per-class sampling without replacement; all remaining labeled
// pixels form the test set, which must be nonempty.
SplitSpec split_labels(const LabelMap& labels, int per_class, std::uint64_t seed);

}  // namespace hsi

#endif  // HSI_SPLIT_HPP_
