#ifndef HSI_ACTIVE_LOOP_HPP_
#define HSI_ACTIVE_LOOP_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hsi/trainers.hpp"

namespace hsi {

enum class QueryStrategy { kRandom, kEntropy, kBald, kDensityWeighted };

QueryStrategy parse_strategy(const std::string& name);
const char* to_string(QueryStrategy s);

struct CurvePoint {
  int round = 0;
  std::size_t labels_used = 0;
  double oa = 0.0;
  std::vector<double> per_class;
};

// Indices refer to one PatchSet holding every candidate sample.
struct ALState {
  std::vector<std::size_t> labeled_idx;
  std::vector<std::size_t> pool_idx;
  int budget = 0;  // total queries allowed
  int step = 1;    // queries per round
  int queries = 0;
  std::vector<CurvePoint> history;

  // Throws StateError when the index sets overlap or leave [0, n).
  void validate(std::size_t n) const;
};

// Every index outside `labeled` goes to the pool.
ALState make_state(std::size_t n, std::vector<std::size_t> labeled, int budget, int step);

struct QueryConfig {
  int mc_passes = 16;
  int density_k = 10;
  std::uint64_t seed = 0;
};

// Positions into `pool` of the n chosen samples, best first. Ties go to the
// lowest position. bald ranks by mutual information, then entropy.
std::vector<std::size_t> query(QueryStrategy strategy, const TrainedModel& model,
                               const PatchSet& pool, std::size_t n, const QueryConfig& cfg = {});

// Moves `indices` from the pool to the labeled set and returns their labels.
std::vector<int> oracle_label(ALState& state, const std::vector<std::size_t>& indices,
                              const std::vector<int>& truth);

struct LoopConfig {
  TrainConfig train;
  QueryConfig query;
  bool warm_start = false;
  // Stop early after this many rounds without an OA gain above plateau_tol.
  int plateau_rounds = 0;
  double plateau_tol = 0.0;
};

// `data` carries the oracle's ground truth. Rounds: train on the labeled
// set, evaluate on `test`, query, label; until the budget is spent.
ALState run_loop(ALState initial, QueryStrategy strategy, const NetworkSpec& spec,
                 const PatchSet& data, const PatchSet& test, const LoopConfig& cfg);

// First labels_used at which OA reaches `target`, or nullopt.
std::optional<std::size_t> labels_to_reach(const std::vector<CurvePoint>& curve, double target);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace hsi

#endif  // HSI_ACTIVE_LOOP_HPP_
