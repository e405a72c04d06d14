#ifndef HSI_DATL_HPP_
#define HSI_DATL_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "hsi/cube.hpp"
#include "hsi/inference.hpp"

namespace hsi {

// Latent features of one domain with their labels (0 = unlabeled).
struct FeatureBatch {
  Domain domain = Domain::kSource;
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
  std::span<const double> row(std::size_t i) const { return features.row(i); }
  void validate() const;
};

enum class BetaMode { kFixed, kPadEstimated };

struct AdaptationConfig {
  BetaMode beta_mode = BetaMode::kPadEstimated;
  double fixed_beta = 0.5;
  double beta_min = 0.0;  // clamp applied to the final beta
  double beta_max = 1.0;
  bool stability_shift = true;  // log-domain evaluation with max subtraction
  int pad_folds = 5;
  std::uint64_t seed = 0;
  int svm_epochs = 40;
  double svm_lambda = 1e-3;

  void validate() const;
};

// Squared Euclidean distance.
double pair_distance(std::span<const double> fs, std::span<const double> ft);

// p_i proportional to exp(-||fs_i - ft||^2) over the source batch.
std::vector<double> neighbor_probs(const FeatureBatch& source, std::span<const double> ft,
                                   bool stability_shift = true);

// sum_{same class} exp(-d) / sum_{other classes} exp(-d) for a target feature
// of class c. Throws DegenerateSupportError without support on either side.
double class_prob(const FeatureBatch& source, std::span<const double> ft, int c,
                  bool stability_shift = true);

struct DatlResult {
  double loss = 0.0;
  double mean_log_cross = 0.0;   // mean log cross-domain ratio over used samples
  double mean_log_within = 0.0;  // mean log target-target ratio over used samples
  int used = 0;
  int skipped = 0;
  Matrix grad_source;  // d loss / d source features
  Matrix grad_target;  // d loss / d target features
};

// loss = -mean_j [ beta * log r_cross(j) + (1 - beta) * log r_within(j) ]
// over labeled target samples j. r_cross compares j against the source batch;
// r_within against the other target samples (j itself excluded). A term with
// zero weight does not need support; samples lacking support for a weighted
// term are skipped and counted, and DegenerateSupportError is thrown when
// every sample is skipped.
DatlResult datl_loss(const FeatureBatch& source, const FeatureBatch& target, double beta,
                     bool stability_shift = true, bool with_grad = true);

// beta = 1 - 2 * eps with eps clamped to [0, 0.5], then clamped to the
// configured range.
double beta_from_error(double eps, const AdaptationConfig& cfg = {});

// Mean validation balanced error of a linear hinge-loss domain discriminator
// under stratified k-fold cross-validation.
double domain_discriminator_error(const Matrix& source, const Matrix& target,
                                  const AdaptationConfig& cfg);

// Fixed mode returns the configured beta; PAD mode estimates it from the
// discriminator error.
double estimate_beta(const FeatureBatch& source, const FeatureBatch& target,
                     const AdaptationConfig& cfg);

}  // namespace hsi

#endif  // HSI_DATL_HPP_
