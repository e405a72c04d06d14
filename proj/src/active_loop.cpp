#include "hsi/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>

#include "train_common.hpp"

namespace hsi {

namespace {

// Stable descending order of scores; equal scores keep the lower position.
std::vector<std::size_t> top_n(const std::vector<std::pair<double, double>>& scores, std::size_t n) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(n);
  return order;
}

std::vector<double> density(const Matrix& f, int k) {
  const std::size_t n = f.rows;
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : f.row(i)) norm[i] += v * v;
    norm[i] = std::sqrt(norm[i]);
  }
  const auto cosine = [&](std::size_t a, std::size_t b) {
    if (norm[a] == 0.0 || norm[b] == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t q = 0; q < f.cols; ++q) dot += f(a, q) * f(b, q);
    return dot / (norm[a] * norm[b]);
  };
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  std::vector<double> out(n, 1.0);
  if (kk == 0) return out;
  std::vector<double> sims;
  for (std::size_t i = 0; i < n; ++i) {
    sims.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sims.push_back(cosine(i, j));
    }
    std::partial_sort(sims.begin(), sims.begin() + kk, sims.end(), std::greater<>());
    out[i] = std::accumulate(sims.begin(), sims.begin() + kk, 0.0) / static_cast<double>(kk);
  }
  return out;
}

}  // namespace

QueryStrategy parse_strategy(const std::string& name) {
  if (name == "random") return QueryStrategy::kRandom;
  if (name == "entropy") return QueryStrategy::kEntropy;
  if (name == "bald") return QueryStrategy::kBald;
  if (name == "density_weighted") return QueryStrategy::kDensityWeighted;
  throw ArgumentError("unknown query strategy '" + name + "'");
}

const char* to_string(QueryStrategy s) {
  switch (s) {
    case QueryStrategy::kRandom: return "random";
    case QueryStrategy::kEntropy: return "entropy";
    case QueryStrategy::kBald: return "bald";
    case QueryStrategy::kDensityWeighted: return "density_weighted";
  }
  return "?";
}

void ALState::validate(std::size_t n) const {
  std::vector<char> seen(n, 0);
  for (const auto* set : {&labeled_idx, &pool_idx}) {
    for (std::size_t i : *set) {
      if (i >= n) throw StateError("index " + std::to_string(i) + " outside the data set");
      if (seen[i]) throw StateError("index " + std::to_string(i) + " appears twice");
      seen[i] = 1;
    }
  }
  if (queries > budget) throw StateError("queries exceed the budget");
}

ALState make_state(std::size_t n, std::vector<std::size_t> labeled, int budget, int step) {
  ALState s;
  std::sort(labeled.begin(), labeled.end());
  std::vector<char> in(n, 0);
  for (std::size_t i : labeled) {
    if (i >= n) throw ArgumentError("labeled index " + std::to_string(i) + " outside the data set");
    if (in[i]) throw ArgumentError("labeled index " + std::to_string(i) + " given twice");
    in[i] = 1;
  }
  s.labeled_idx = std::move(labeled);
  for (std::size_t i = 0; i < n; ++i) {
    if (!in[i]) s.pool_idx.push_back(i);
  }
  s.budget = budget;
  s.step = step;
  return s;
}

std::vector<std::size_t> query(QueryStrategy strategy, const TrainedModel& model,
                               const PatchSet& pool, std::size_t n, const QueryConfig& cfg) {
  if (n > pool.size()) {
    throw ArgumentError("cannot query " + std::to_string(n) + " samples from a pool of " +
                        std::to_string(pool.size()));
  }
  if (strategy == QueryStrategy::kRandom) {
    Rng rng(cfg.seed);
    auto idx = permutation(pool.size(), rng);
    idx.resize(n);
    return idx;
  }
  if (!model.spec.has_dropout()) {
    throw StructureError(std::string(to_string(strategy)) + " querying needs a dropout layer");
  }
  if (cfg.mc_passes < 1) throw ArgumentError("mc_passes must be >= 1");
  const Network net(model.spec, model.input);
  const auto mc = mc_forward(net, model.params, pool, cfg.mc_passes, cfg.seed);
  std::vector<std::pair<double, double>> scores(pool.size());
  switch (strategy) {
    case QueryStrategy::kEntropy:
      for (std::size_t i = 0; i < pool.size(); ++i) scores[i] = {mc[i].entropy, 0.0};
      break;
    case QueryStrategy::kBald:
      for (std::size_t i = 0; i < pool.size(); ++i) {
        scores[i] = {mc[i].mutual_information, mc[i].entropy};
      }
      break;
    case QueryStrategy::kDensityWeighted: {
      const Matrix f = features_at(net, model.params, pool, net.num_layers() - 1);
      const auto dens = density(f, cfg.density_k);
      for (std::size_t i = 0; i < pool.size(); ++i) scores[i] = {mc[i].entropy * dens[i], 0.0};
      break;
    }
    case QueryStrategy::kRandom:
      break;
  }
  return top_n(scores, n);
}

std::vector<int> oracle_label(ALState& state, const std::vector<std::size_t>& indices,
                              const std::vector<int>& truth) {
  std::set<std::size_t> labeled(state.labeled_idx.begin(), state.labeled_idx.end());
  std::set<std::size_t> pool(state.pool_idx.begin(), state.pool_idx.end());
  std::set<std::size_t> batch;
  for (std::size_t i : indices) {
    if (labeled.count(i)) throw StateError("index " + std::to_string(i) + " is already labeled");
    if (!pool.count(i) || !batch.insert(i).second) {
      throw StateError("index " + std::to_string(i) + " is not in the pool");
    }
    if (i >= truth.size()) throw StateError("index " + std::to_string(i) + " has no ground truth");
  }
  std::vector<int> out;
  for (std::size_t i : indices) {
    out.push_back(truth[i]);
    state.labeled_idx.push_back(i);
  }
  std::erase_if(state.pool_idx, [&](std::size_t i) { return batch.count(i) > 0; });
  return out;
}

ALState run_loop(ALState state, QueryStrategy strategy, const NetworkSpec& spec,
                 const PatchSet& data, const PatchSet& test, const LoopConfig& cfg) {
  state.validate(data.size());
  if (state.budget < 0 || state.step < 1) throw ArgumentError("budget must be >= 0 and step >= 1");
  if (state.budget > 0 && state.budget < state.step) {
    throw ArgumentError("budget " + std::to_string(state.budget) + " is smaller than step " +
                        std::to_string(state.step));
  }
  if (state.labeled_idx.empty()) throw ArgumentError("the initial labeled set is empty");
  data.require_labeled("oracle ground truth");
  std::set<int> present(data.labels.begin(), data.labels.end());
  for (std::size_t i : state.labeled_idx) present.erase(data.labels[i]);
  if (!present.empty()) {
    throw ArgumentError("the initial labeled set lacks class " + std::to_string(*present.begin()));
  }
  if (test.size() == 0) throw ArgumentError("active learning needs a nonempty test set");

  std::optional<TrainedModel> previous;
  int stale = 0;
  double best = -1.0;
  for (int round = 0;; ++round) {
    const PatchSet labeled = data.subset(state.labeled_idx);
    TrainedModel model;
    if (cfg.warm_start && previous) {
      model = detail::fit_classifier(spec, previous->input, previous->params, labeled, cfg.train, 0);
    } else {
      model = train_supervised(spec, labeled, cfg.train);
    }
    const Evaluation ev = evaluate(model, test);
    state.history.push_back({round, state.labeled_idx.size(), ev.oa, ev.per_class});
    if (ev.oa > best + cfg.plateau_tol) {
      best = std::max(best, ev.oa);
      stale = 0;
    } else {
      ++stale;
    }
    if (cfg.plateau_rounds > 0 && stale >= cfg.plateau_rounds) break;
    const int left = state.budget - state.queries;
    if (left <= 0 || state.pool_idx.empty()) break;
    const std::size_t n = std::min<std::size_t>(
        {static_cast<std::size_t>(state.step), static_cast<std::size_t>(left), state.pool_idx.size()});
    const PatchSet pool = data.subset(state.pool_idx);
    QueryConfig qc = cfg.query;
    qc.seed = mix_seed(cfg.query.seed, static_cast<std::uint64_t>(round));
    const auto picks = query(strategy, model, pool, n, qc);
    std::vector<std::size_t> chosen;
    for (std::size_t p : picks) chosen.push_back(state.pool_idx[p]);
    oracle_label(state, chosen, data.labels);
    state.queries += static_cast<int>(n);
    state.validate(data.size());
    previous = std::move(model);
  }
  return state;
}

std::optional<std::size_t> labels_to_reach(const std::vector<CurvePoint>& curve, double target) {
  for (const auto& p : curve) {
    if (p.oa >= target) return p.labels_used;
  }
  return std::nullopt;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  std::size_t classes = 0;
  for (const auto& p : curve) classes = std::max(classes, p.per_class.size());
  out << "round,labels_used,oa";
  for (std::size_t c = 1; c <= classes; ++c) out << ",class_" << c;
  out << "\n" << std::setprecision(10);
  for (const auto& p : curve) {
    out << p.round << "," << p.labels_used << "," << p.oa;
    for (std::size_t c = 0; c < classes; ++c) {
      out << ",";
      if (c < p.per_class.size() && !std::isnan(p.per_class[c])) out << p.per_class[c];
    }
    out << "\n";
  }
}

}  // namespace hsi
