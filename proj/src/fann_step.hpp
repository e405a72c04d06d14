#ifndef HSI_SRC_FANN_STEP_HPP_
#define HSI_SRC_FANN_STEP_HPP_

#include <vector>

#include "hsi/network.hpp"
#include "hsi/trainers.hpp"

namespace hsi::detail {

struct FannGrads {
  ParamStore source;
  ParamStore target;
  ParamStore projections;
  ParamStore head;
};

struct FannStepStats {
  double ce_source = 0.0;
  double ce_target = 0.0;
  std::vector<double> datl;  // weighted, per pair
  std::size_t correct_target = 0;
};

// Loss of one source/target batch pair and its gradients (overwritten in g).
// The loss is ce_source + ce_target + sum(datl).
FannStepStats fann_step(const FannModel& m, const std::vector<double>& weights,
                        bool stability_shift, const PatchSet& source,
                        const std::vector<std::size_t>& sb, const PatchSet& target,
                        const std::vector<std::size_t>& tb, DropoutMode mode, Rng* rng,
                        FannGrads& g);

}  // namespace hsi::detail

#endif  // HSI_SRC_FANN_STEP_HPP_
