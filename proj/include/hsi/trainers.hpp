#ifndef HSI_TRAINERS_HPP_
#define HSI_TRAINERS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsi/datl.hpp"
#include "hsi/inference.hpp"
#include "hsi/netspec.hpp"
#include "hsi/params.hpp"

namespace hsi {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::uint64_t seed = 0;

  double lambda_recon = 0.0;  // semisup_recon

  // plssdl
  int freeze_depth = 0;
  int head_units = 32;  // dense layer placed before the new softmax
  std::string clusterer = "kmeans";
  int clusters = 0;  // 0: the pretraining softmax width
  int kmeans_restarts = 10;

  // fann
  std::vector<double> datl_weights;  // per aligned pair; empty: datl_weight for all
  double datl_weight = 1.0;
  int align_dim = 32;
  double align_radius = 0.5;  // projected features are clipped to this norm; 0 keeps them raw
  int beta_refresh = 5;
  int pad_sample_cap = 200;  // per-domain feature snapshot size for beta
  AdaptationConfig adaptation;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // ConfigError names the field
  std::uint64_t hash() const;
};

// One history row: epoch number plus named loss/metric components.
struct EpochRecord {
  int epoch = 0;
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const;
};
using History = std::vector<EpochRecord>;

void write_history_csv(const History& history, const std::filesystem::path& path);

struct TrainedModel {
  NetworkSpec spec;
  Shape3 input;
  ParamStore params;
  History history;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  // Reconstruction branch, present after train_semisup_recon.
  std::optional<DecoderSpec> decoder;
  ParamStore decoder_params;
};

TrainedModel train_supervised(const NetworkSpec& spec, const PatchSet& labeled,
                              const TrainConfig& cfg);

// Labels 1..k.
using Clusterer = std::function<std::vector<int>(const Matrix& features, int k, std::uint64_t seed)>;

// Lloyd iterations from k-means++ seeds, best of `restarts` (capped at 50)
// by within-cluster sum of squares.
std::vector<int> kmeans(const Matrix& features, int k, std::uint64_t seed, int restarts = 10);
Clusterer make_clusterer(const std::string& name, int restarts = 10);

// Partition of flattened patches. Throws ArgumentError for k < 2 or N < k.
std::vector<int> cluster_pseudo(const Matrix& features, int k, std::uint64_t seed,
                                const Clusterer& clusterer);
Matrix flatten(const PatchSet& patches);

TrainedModel pretrain_pseudo(const NetworkSpec& spec, const PatchSet& unlabeled,
                             const TrainConfig& cfg, const Clusterer& clusterer = {});

// Keeps the trunk (every layer before the softmax), appends
// fc-head_units -> softmax-C and trains on `labeled` with the first
// freeze_depth parameterised trunk layers held fixed.
TrainedModel finetune(const TrainedModel& pretrained, const PatchSet& labeled,
                      const TrainConfig& cfg);

// Cross entropy on labeled batches plus lambda_recon times the mean squared
// reconstruction error of a mirrored decoder on labeled + unlabeled samples.
TrainedModel train_semisup_recon(const NetworkSpec& spec, const PatchSet& labeled,
                                 const PatchSet& unlabeled, const TrainConfig& cfg);

struct Evaluation {
  double oa = 0.0;
  std::vector<double> per_class;  // recall per class, NaN for absent classes
  std::vector<std::vector<int>> confusion;  // [true - 1][predicted - 1]
};

Evaluation evaluate_labels(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int classes);
Evaluation evaluate(const TrainedModel& model, const PatchSet& test);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);
// "95.8 ± 1.1" for several values, "95.8" for one (values in percent).
std::string format_summary(const Summary& s);

// Mean silhouette coefficient under Euclidean distance.
double silhouette(const Matrix& features, const std::vector<int>& labels);

// Dual-branch network with one learned linear projection per aligned pair
// and a shared head over the concatenated projections.
struct FannModel {
  FannSpec spec;
  Shape3 source_input;
  Shape3 target_input;
  ParamStore source_params;
  ParamStore target_params;
  // layers[2p] source projection {W [d_s, A], b [A]}, layers[2p + 1] target.
  ParamStore projections;
  NetworkSpec head;  // input_bands = A * pairs
  ParamStore head_params;
  std::vector<double> betas;
  int align_dim = 0;
  double align_radius = 0.0;
  History history;
  bool trained = false;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::size_t num_pairs() const { return spec.aligned_layer_ids.size(); }
  int num_classes() const { return spec.num_classes(); }
};

// `target_unlabeled` only feeds the domain discriminator that sets beta.
FannModel train_fann(const FannSpec& spec, const PatchSet& source_labeled,
                     const PatchSet& target_labeled, const TrainConfig& cfg,
                     const PatchSet* target_unlabeled = nullptr);

// The same network trained on source labels alone, without alignment terms.
// Apply it to target data through the source branch (Domain::kSource).
FannModel train_source_only(const FannSpec& spec, const PatchSet& source_labeled,
                            const TrainConfig& cfg);

// Projected aligned features of one domain: pair index in [0, pairs), or
// kConcatenated for all pairs side by side.
constexpr int kConcatenated = -1;
Matrix fann_features(const FannModel& model, const PatchSet& patches, Domain domain, int pair);
std::vector<int> fann_predict(const FannModel& model, const PatchSet& patches, Domain domain);
Evaluation evaluate_fann(const FannModel& model, const PatchSet& test, Domain domain);

struct ProbeConfig {
  int iterations = 300;
  double learning_rate = 0.5;
  double l2 = 1e-3;
};

// Softmax regression fitted on the chosen features of source_train and
// target_train; returns overall accuracy on target_test.
double layer_probe(const FannModel& model, int pair, const PatchSet& source_train,
                   const PatchSet& target_train, const PatchSet& target_test,
                   const ProbeConfig& probe = {});

void save_model(const TrainedModel& model, const std::filesystem::path& manifest,
                const nlohmann::json& extra = {});
TrainedModel load_model(const std::filesystem::path& manifest);
void save_fann(const FannModel& model, const std::filesystem::path& manifest,
               const nlohmann::json& extra = {});
FannModel load_fann(const std::filesystem::path& manifest);

}  // namespace hsi

#endif  // HSI_TRAINERS_HPP_
