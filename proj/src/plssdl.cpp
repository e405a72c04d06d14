#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hsi/trainers.hpp"
#include "train_common.hpp"

namespace hsi {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

// Nearest center, ties to the lower index.
std::size_t nearest(const Matrix& centers, std::span<const double> x, double* dist) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows; ++c) {
    const double d = sq_dist(centers.row(c), x);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (dist) *dist = bd;
  return best;
}

Matrix plus_plus_seeds(const Matrix& x, int k, Rng& rng) {
  const std::size_t n = x.rows;
  Matrix centers(static_cast<std::size_t>(k), x.cols);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = uniform_index(rng, n);
  for (int c = 0; c < k; ++c) {
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), centers.row(c)));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);
      continue;
    }
    double u = uniform01(rng) * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

std::vector<int> canonical(const std::vector<int>& raw) {
  std::map<int, int> rename;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = rename.find(raw[i]);
    if (it == rename.end()) it = rename.emplace(raw[i], static_cast<int>(rename.size()) + 1).first;
    out[i] = it->second;
  }
  return out;
}

}  // namespace

std::vector<int> kmeans(const Matrix& x, int k, std::uint64_t seed, int restarts) {
  if (k < 1 || x.rows < static_cast<std::size_t>(k)) {
    throw ArgumentError("k-means needs 1 <= k <= N");
  }
  restarts = std::clamp(restarts, 1, 50);
  const std::size_t n = x.rows;
  std::vector<int> best_assign;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    Matrix centers = plus_plus_seeds(x, k, rng);
    std::vector<int> assign(n, -1);
    std::vector<double> dist(n);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(nearest(centers, x.row(i), &dist[i]));
        changed = changed || c != assign[i];
        assign[i] = c;
      }
      if (!changed && iter > 0) break;
      std::vector<std::size_t> count(k, 0);
      std::fill(centers.data.begin(), centers.data.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        ++count[assign[i]];
        auto row = centers.row(assign[i]);
        const auto xi = x.row(i);
        for (std::size_t q = 0; q < x.cols; ++q) row[q] += xi[q];
      }
      for (int c = 0; c < k; ++c) {
        if (count[c] == 0) {
          // Re-seed an empty cluster at the worst-served point.
          const auto far = static_cast<std::size_t>(
              std::max_element(dist.begin(), dist.end()) - dist.begin());
          std::copy(x.row(far).begin(), x.row(far).end(), centers.row(c).begin());
          dist[far] = 0.0;
          continue;
        }
        for (auto& v : centers.row(c)) v /= static_cast<double>(count[c]);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(x.row(i), centers.row(assign[i]));
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_assign = assign;
    }
  }
  return canonical(best_assign);
}

Clusterer make_clusterer(const std::string& name, int restarts) {
  if (name == "kmeans") {
    return [restarts](const Matrix& f, int k, std::uint64_t seed) {
      return kmeans(f, k, seed, restarts);
    };
  }
  throw ArgumentError("unknown clusterer '" + name + "'");
}

Matrix flatten(const PatchSet& patches) {
  Matrix m(patches.size(), patches.sample_size());
  std::copy(patches.data.begin(), patches.data.end(), m.data.begin());
  return m;
}

std::vector<int> cluster_pseudo(const Matrix& features, int k, std::uint64_t seed,
                                const Clusterer& clusterer) {
  if (k < 2) throw ArgumentError("pseudo-labelling needs k >= 2");
  if (features.rows < static_cast<std::size_t>(k)) {
    throw ArgumentError("pseudo-labelling needs at least k = " + std::to_string(k) +
                        " samples, got " + std::to_string(features.rows));
  }
  const auto labels = clusterer ? clusterer(features, k, seed) : kmeans(features, k, seed);
  if (labels.size() != features.rows) throw StateError("clusterer returned the wrong count");
  for (int y : labels) {
    if (y < 1 || y > k) throw StateError("clusterer returned a label outside 1..k");
  }
  return labels;
}

TrainedModel pretrain_pseudo(const NetworkSpec& spec, const PatchSet& unlabeled,
                             const TrainConfig& cfg, const Clusterer& clusterer) {
  cfg.validate();
  const int k = cfg.clusters > 0 ? cfg.clusters : spec.num_classes();
  if (spec.num_classes() != k) {
    throw StructureError("pretraining softmax has " + std::to_string(spec.num_classes()) +
                         " outputs but " + std::to_string(k) + " clusters were requested");
  }
  const Clusterer use = clusterer ? clusterer : make_clusterer(cfg.clusterer, cfg.kmeans_restarts);
  PatchSet pseudo = unlabeled;
  pseudo.labels =
      cluster_pseudo(flatten(unlabeled), k, mix_seed(cfg.seed, detail::kClusterStream), use);
  return train_supervised(spec, pseudo, cfg);
}

TrainedModel finetune(const TrainedModel& pretrained, const PatchSet& labeled,
                      const TrainConfig& cfg) {
  cfg.validate();
  NetworkSpec spec = pretrained.spec;
  if (spec.ends_in_softmax()) spec.layers.pop_back();
  const int depth = spec.trunk_depth();
  if (cfg.freeze_depth > depth) {
    throw ArgumentError("freeze_depth " + std::to_string(cfg.freeze_depth) +
                        " exceeds the pretrained trunk depth " + std::to_string(depth));
  }
  if (labeled.size() == 0) throw ArgumentError("fine-tuning needs labeled samples");
  const std::size_t trunk_layers = spec.layers.size();
  spec.layers.push_back(LayerSpec::dense(cfg.head_units));
  spec.layers.push_back(LayerSpec::softmax(labeled.num_classes()));
  validate(spec);
  ParamStore params =
      init_params(spec, pretrained.input, mix_seed(cfg.seed, detail::kHeadInitStream));
  for (std::size_t i = 0; i < trunk_layers; ++i) params.layers[i] = pretrained.params.layers[i];
  const int stop = cfg.freeze_depth == 0 ? 0 : spec.trunk_layer_index(cfg.freeze_depth) + 1;
  const auto frozen = params.checksum(0, static_cast<std::size_t>(stop));
  TrainedModel out =
      detail::fit_classifier(spec, pretrained.input, std::move(params), labeled, cfg, stop);
  if (out.params.checksum(0, static_cast<std::size_t>(stop)) != frozen) {
    throw StateError("frozen layers changed during fine-tuning");
  }
  return out;
}

double silhouette(const Matrix& x, const std::vector<int>& labels) {
  if (labels.size() != x.rows) throw ShapeError("silhouette: label count mismatch");
  std::map<int, std::size_t> sizes;
  for (int y : labels) ++sizes[y];
  if (sizes.size() < 2) throw ArgumentError("silhouette needs at least two clusters");
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::map<int, double> sum;
    for (std::size_t j = 0; j < x.rows; ++j) {
      if (i != j) sum[labels[j]] += std::sqrt(sq_dist(x.row(i), x.row(j)));
    }
    const std::size_t own = sizes[labels[i]];
    if (own == 1) continue;
    const double a = sum[labels[i]] / static_cast<double>(own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [y, n] : sizes) {
      if (y != labels[i]) b = std::min(b, sum[y] / static_cast<double>(n));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(x.rows);
}

}  // namespace hsi
