#ifndef HSI_SYNTH_HPP_
#define HSI_SYNTH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsi/cube.hpp"

namespace hsi {

struct BandGrid {
  double first_nm = 400.0;
  double last_nm = 1000.0;
  int bands = 48;

  std::vector<double> wavelengths() const;
};

// Operators applied to the target domain only.
struct ShiftConfig {
  double gain = 1.0;         // mean per-band multiplicative gain
  double gain_ripple = 0.0;  // amplitude of a smooth per-band gain oscillation
  double offset = 0.0;       // additive per-band offset
  double mix_strength = 0.0; // fraction of each pixel drawn from a Dirichlet mix
  double dirichlet_alpha = 1.0;
};

struct SynthConfig {
  int classes = 6;
  BandGrid source_grid{400.0, 1000.0, 48};
  BandGrid target_grid{400.0, 1000.0, 48};
  int height = 40;
  int width = 40;
  std::optional<double> snr_db = 30.0;  // nullopt disables noise entirely
  double brightness_jitter = 0.05;      // per-pixel illumination scale std
  int regions_per_class = 3;
  ShiftConfig shift;

  void validate() const;
};

// 6 classes on 40x40 with target gain, ripple, offset and abundance mixing.
// Both domains share one band grid.
SynthConfig shifted_synth_config();

// Deterministic in (config, seed). Both scenes are fully labeled.
DomainPair synth_domain_pair(const SynthConfig& config, std::uint64_t seed);

// Per-class prototype spectrum, evaluated at arbitrary wavelengths.
std::vector<double> class_prototype(const SynthConfig& config, std::uint64_t seed,
                                    int class_id, const std::vector<double>& wavelengths);

std::string synth_config_to_json(const SynthConfig& config);
// Fields absent from `text` keep their values from `base`.
SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base = {});

}  // namespace hsi

#endif  // HSI_SYNTH_HPP_
