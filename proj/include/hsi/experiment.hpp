#ifndef HSI_EXPERIMENT_HPP_
#define HSI_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsi/active_loop.hpp"
#include "hsi/augment.hpp"
#include "hsi/synth.hpp"
#include "hsi/trainers.hpp"

namespace hsi {

enum class TrainerMode { kSupervised, kSemisupRecon, kPlssdl, kFann, kActive };

TrainerMode parse_mode(const std::string& name);
const char* to_string(TrainerMode mode);

struct SceneFiles {
  std::filesystem::path cube;    // header
  std::filesystem::path labels;  // CSV; the names sidecar sits next to it
};

// Either a synthetic generator (run seed = generator seed) or files on disk.
struct DatasetBlock {
  std::optional<SynthConfig> synthetic;
  std::optional<SceneFiles> source;
  std::optional<SceneFiles> target;
  int window = 1;
};

struct SplitBlock {
  int per_class = 5;         // source training labels per class
  int target_per_class = 3;  // fann: labeled target pixels per class
};

struct ModelBlock {
  std::string network;  // classifier modes
  std::string fann;     // fann mode
};

struct ActiveBlock {
  QueryStrategy strategy = QueryStrategy::kEntropy;
  int initial_per_class = 1;
  int budget = 30;
  int step = 6;
  int mc_passes = 16;
  int density_k = 10;
  bool warm_start = false;
  int plateau_rounds = 0;
  double plateau_tol = 0.0;
};

struct ReportBlock {
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds{1};
  bool probes = true;  // fann: per-layer probe table
};

struct ExperimentConfig {
  DatasetBlock dataset;
  SplitBlock split;
  std::optional<AugmentPlan> augment;
  ModelBlock model;
  TrainerMode mode = TrainerMode::kSupervised;
  TrainConfig train;
  ActiveBlock active;
  ReportBlock report;

  // Relative file paths resolve against base_dir. Every error is a
  // ConfigError whose message starts with the dotted field name.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = ".");
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

// HSI_OUT_DIR replaces report.out_dir and HSI_SEED replaces the seed list.
void apply_env_overrides(ExperimentConfig& cfg);

struct LoadedScenes {
  HyperScene source;
  std::optional<HyperScene> target;
  std::string shift_metadata;
};

LoadedScenes load_scenes(const DatasetBlock& dataset, std::uint64_t seed);

// Writes source/target cubes, label CSVs and shift.json under out_dir.
DomainPair gen_synth(const SynthConfig& config, std::uint64_t seed,
                     const std::filesystem::path& out_dir);

// Loads and cross-checks the configured scenes and writes dataset.json
// (shapes, wavelength range, class counts) under out_dir.
nlohmann::json ingest(const DatasetBlock& dataset, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

// "$95.8 \pm 1.1$", or "$95.8$" for a single value (values in percent).
std::string latex_summary(const Summary& s);

// Trains every seed into out_dir/seed_<n>/ and writes out_dir/metrics.json.
// A failing seed is recorded and skipped; TrainingError when all fail.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

// Layer names: classifier taps ("input", "conv1", "fc2", ...) or, for FANN
// checkpoints, "input", "FA-1".."FA-k" and "concatenated". Writes
// label,domain,f1..fd rows for every labeled pixel of the configured scenes.
std::size_t export_features(const std::filesystem::path& checkpoint, const DatasetBlock& dataset,
                            std::uint64_t seed, const std::string& layer,
                            const std::filesystem::path& out_csv);

// Renders report.md and report.csv next to metrics.json. ReportError lists
// every missing artifact.
std::string render_report(const std::filesystem::path& run_dir);

}  // namespace hsi

#endif  // HSI_EXPERIMENT_HPP_
