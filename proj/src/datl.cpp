#include "hsi/datl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsi/rng.hpp"

namespace hsi {

namespace {

// log(sum_i exp(v_i)); the stable form subtracts the maximum first.
double log_sum_exp(const std::vector<double>& v, bool stable) {
  if (!stable) {
    double s = 0.0;
    for (double x : v) s += std::exp(x);
    return std::log(s);
  }
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void require_same_dim(const FeatureBatch& a, std::span<const double> ft) {
  if (a.dim() != ft.size()) {
    throw ShapeError("feature dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                     std::to_string(ft.size()));
  }
}

// One ratio term: log sum_{S} exp(-d) - log sum_{D} exp(-d), plus the softmax
// weights over each set (used for gradients).
struct RatioTerm {
  double log_ratio = 0.0;
  std::vector<double> same_w;
  std::vector<double> diff_w;
};

RatioTerm ratio_term(const std::vector<double>& d_same, const std::vector<double>& d_diff,
                     bool stable) {
  std::vector<double> ns(d_same.size()), nd(d_diff.size());
  for (std::size_t i = 0; i < d_same.size(); ++i) ns[i] = -d_same[i];
  for (std::size_t i = 0; i < d_diff.size(); ++i) nd[i] = -d_diff[i];
  RatioTerm t;
  const double ls = log_sum_exp(ns, stable);
  const double ld = log_sum_exp(nd, stable);
  t.log_ratio = ls - ld;
  t.same_w.resize(ns.size());
  t.diff_w.resize(nd.size());
  for (std::size_t i = 0; i < ns.size(); ++i) t.same_w[i] = std::exp(ns[i] - ls);
  for (std::size_t i = 0; i < nd.size(); ++i) t.diff_w[i] = std::exp(nd[i] - ld);
  return t;
}

}  // namespace

void FeatureBatch::validate() const {
  if (labels.size() != features.rows) throw ShapeError("feature batch: label count mismatch");
  for (double v : features.data) {
    if (!std::isfinite(v)) throw DataError("feature batch holds non-finite values");
  }
}

void AdaptationConfig::validate() const {
  if (beta_mode == BetaMode::kFixed && (fixed_beta < 0.0 || fixed_beta > 1.0)) {
    throw ArgumentError("fixed beta must lie in [0, 1]");
  }
  if (beta_min < 0.0 || beta_max > 1.0 || beta_min > beta_max) {
    throw ArgumentError("beta clamp must satisfy 0 <= min <= max <= 1");
  }
  if (pad_folds < 2) throw ArgumentError("PAD needs at least 2 folds");
}

double pair_distance(std::span<const double> fs, std::span<const double> ft) {
  if (fs.size() != ft.size()) {
    throw ShapeError("pair_distance: dimension mismatch " + std::to_string(fs.size()) +
                     " vs " + std::to_string(ft.size()));
  }
  double d = 0.0;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    const double diff = fs[k] - ft[k];
    d += diff * diff;
  }
  return d;
}

std::vector<double> neighbor_probs(const FeatureBatch& source, std::span<const double> ft,
                                   bool stability_shift) {
  if (source.size() == 0) throw ArgumentError("neighbor_probs: empty source batch");
  require_same_dim(source, ft);
  std::vector<double> neg(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) neg[i] = -pair_distance(source.row(i), ft);
  const double lse = log_sum_exp(neg, stability_shift);
  std::vector<double> p(neg.size());
  for (std::size_t i = 0; i < neg.size(); ++i) p[i] = std::exp(neg[i] - lse);
  return p;
}

double class_prob(const FeatureBatch& source, std::span<const double> ft, int c,
                  bool stability_shift) {
  require_same_dim(source, ft);
  std::vector<double> same, diff;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int y = source.labels[i];
    if (y == 0) continue;
    (y == c ? same : diff).push_back(pair_distance(source.row(i), ft));
  }
  if (same.empty() || diff.empty()) {
    throw DegenerateSupportError("class " + std::to_string(c) +
                                 " lacks same-class or different-class support");
  }
  return std::exp(ratio_term(same, diff, stability_shift).log_ratio);
}

DatlResult datl_loss(const FeatureBatch& source, const FeatureBatch& target, double beta,
                     bool stability_shift, bool with_grad) {
  if (beta < 0.0 || beta > 1.0) throw ArgumentError("beta must lie in [0, 1]");
  if (source.dim() != target.dim()) {
    throw ShapeError("datl_loss: source dim " + std::to_string(source.dim()) +
                     " differs from target dim " + std::to_string(target.dim()));
  }
  source.validate();
  target.validate();
  const std::size_t ns = source.size(), nt = target.size(), dim = source.dim();
  DatlResult res;
  if (with_grad) {
    res.grad_source = Matrix(ns, dim);
    res.grad_target = Matrix(nt, dim);
  }
  const bool use_cross = beta > 0.0;
  const bool use_within = beta < 1.0;

  struct Contribution {
    std::size_t j;
    std::vector<std::size_t> cross_same, cross_diff, within_same, within_diff;
    RatioTerm cross, within;
  };
  std::vector<Contribution> used;
  for (std::size_t j = 0; j < nt; ++j) {
    const int c = target.labels[j];
    if (c == 0) {
      ++res.skipped;
      continue;
    }
    Contribution k;
    k.j = j;
    const auto tj = target.row(j);
    if (use_cross) {
      std::vector<double> ds, dd;
      for (std::size_t i = 0; i < ns; ++i) {
        const int y = source.labels[i];
        if (y == 0) continue;
        const double d = pair_distance(source.row(i), tj);
        if (y == c) {
          k.cross_same.push_back(i);
          ds.push_back(d);
        } else {
          k.cross_diff.push_back(i);
          dd.push_back(d);
        }
      }
      if (ds.empty() || dd.empty()) {
        ++res.skipped;
        continue;
      }
      k.cross = ratio_term(ds, dd, stability_shift);
    }
    if (use_within) {
      std::vector<double> ds, dd;
      for (std::size_t i = 0; i < nt; ++i) {
        const int y = target.labels[i];
        if (i == j || y == 0) continue;
        const double d = pair_distance(target.row(i), tj);
        if (y == c) {
          k.within_same.push_back(i);
          ds.push_back(d);
        } else {
          k.within_diff.push_back(i);
          dd.push_back(d);
        }
      }
      if (ds.empty() || dd.empty()) {
        ++res.skipped;
        continue;
      }
      k.within = ratio_term(ds, dd, stability_shift);
    }
    used.push_back(std::move(k));
  }
  if (used.empty()) {
    throw DegenerateSupportError("datl_loss: no target sample has support in the reference batch");
  }
  res.used = static_cast<int>(used.size());
  const double inv = 1.0 / static_cast<double>(used.size());
  for (const auto& k : used) {
    double term = 0.0;
    if (use_cross) {
      term += beta * k.cross.log_ratio;
      res.mean_log_cross += k.cross.log_ratio * inv;
    }
    if (use_within) {
      term += (1.0 - beta) * k.within.log_ratio;
      res.mean_log_within += k.within.log_ratio * inv;
    }
    res.loss -= term * inv;
    if (!with_grad) continue;
    const auto tj = target.row(k.j);
    auto gtj = res.grad_target.row(k.j);
    // d loss / d d_i = weight * (+w_i for same, -v_i for different); then
    // d d_i / d a_i = 2 (a_i - b_j), d d_i / d b_j = -2 (a_i - b_j).
    const auto push = [&](const Matrix& feats, Matrix& grads, std::size_t i, double coeff) {
      const auto ai = feats.row(i);
      auto gai = grads.row(i);
      for (std::size_t m = 0; m < dim; ++m) {
        const double g = 2.0 * coeff * (ai[m] - tj[m]);
        gai[m] += g;
        gtj[m] -= g;
      }
    };
    if (use_cross) {
      const double wgt = beta * inv;
      for (std::size_t a = 0; a < k.cross_same.size(); ++a) {
        push(source.features, res.grad_source, k.cross_same[a], wgt * k.cross.same_w[a]);
      }
      for (std::size_t a = 0; a < k.cross_diff.size(); ++a) {
        push(source.features, res.grad_source, k.cross_diff[a], -wgt * k.cross.diff_w[a]);
      }
    }
    if (use_within) {
      const double wgt = (1.0 - beta) * inv;
      for (std::size_t a = 0; a < k.within_same.size(); ++a) {
        push(target.features, res.grad_target, k.within_same[a], wgt * k.within.same_w[a]);
      }
      for (std::size_t a = 0; a < k.within_diff.size(); ++a) {
        push(target.features, res.grad_target, k.within_diff[a], -wgt * k.within.diff_w[a]);
      }
    }
  }
  return res;
}

double beta_from_error(double eps, const AdaptationConfig& cfg) {
  eps = std::clamp(eps, 0.0, 0.5);
  return std::clamp(1.0 - 2.0 * eps, cfg.beta_min, cfg.beta_max);
}

double domain_discriminator_error(const Matrix& source, const Matrix& target,
                                  const AdaptationConfig& cfg) {
  const int k = cfg.pad_folds;
  if (k < 2) throw ArgumentError("PAD needs at least 2 folds");
  if (source.rows < static_cast<std::size_t>(k) || target.rows < static_cast<std::size_t>(k)) {
    throw ArgumentError("PAD: each domain needs at least " + std::to_string(k) +
                        " samples for " + std::to_string(k) + "-fold cross-validation");
  }
  if (source.cols != target.cols) throw ShapeError("PAD: feature dimension mismatch");
  const std::size_t dim = source.cols;
  Rng rng(mix_seed(cfg.seed, 0xBAD));
  // Stratified fold assignment.
  std::vector<int> fold_s(source.rows), fold_t(target.rows);
  {
    const auto ps = permutation(source.rows, rng);
    for (std::size_t i = 0; i < ps.size(); ++i) fold_s[ps[i]] = static_cast<int>(i % k);
    const auto pt = permutation(target.rows, rng);
    for (std::size_t i = 0; i < pt.size(); ++i) fold_t[pt[i]] = static_cast<int>(i % k);
  }
  struct Row {
    std::span<const double> x;
    double y;
  };
  double total_err = 0.0;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<Row> train, valid;
    std::size_t n_src = 0, n_tgt = 0;
    for (std::size_t i = 0; i < source.rows; ++i) {
      (fold_s[i] == fold ? valid : train).push_back({source.row(i), 1.0});
      if (fold_s[i] != fold) ++n_src;
    }
    for (std::size_t i = 0; i < target.rows; ++i) {
      (fold_t[i] == fold ? valid : train).push_back({target.row(i), -1.0});
      if (fold_t[i] != fold) ++n_tgt;
    }
    // Standardise with training-fold statistics.
    std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
    for (const auto& r : train) {
      for (std::size_t m = 0; m < dim; ++m) mean[m] += r.x[m];
    }
    for (auto& v : mean) v /= static_cast<double>(train.size());
    for (const auto& r : train) {
      for (std::size_t m = 0; m < dim; ++m) scale[m] += (r.x[m] - mean[m]) * (r.x[m] - mean[m]);
    }
    for (auto& v : scale) {
      v = std::sqrt(v / static_cast<double>(train.size()));
      v = v > 1e-12 ? 1.0 / v : 0.0;
    }
    const auto standardized = [&](std::span<const double> x, std::vector<double>& out) {
      out.resize(dim);
      for (std::size_t m = 0; m < dim; ++m) out[m] = (x[m] - mean[m]) * scale[m];
    };
    // Class-weighted hinge loss, plain SGD with a decaying step.
    const double w_pos = 0.5 * static_cast<double>(train.size()) / static_cast<double>(n_src);
    const double w_neg = 0.5 * static_cast<double>(train.size()) / static_cast<double>(n_tgt);
    std::vector<double> w(dim, 0.0), x;
    double b = 0.0;
    const double eta0 = 0.1;
    std::size_t t = 0;
    for (int epoch = 0; epoch < cfg.svm_epochs; ++epoch) {
      for (std::size_t idx : permutation(train.size(), rng)) {
        const auto& r = train[idx];
        standardized(r.x, x);
        const double eta = eta0 / (1.0 + eta0 * cfg.svm_lambda * static_cast<double>(t++));
        double margin = b;
        for (std::size_t m = 0; m < dim; ++m) margin += w[m] * x[m];
        margin *= r.y;
        for (auto& v : w) v *= 1.0 - eta * cfg.svm_lambda;
        if (margin < 1.0) {
          const double cw = (r.y > 0 ? w_pos : w_neg) * eta * r.y;
          for (std::size_t m = 0; m < dim; ++m) w[m] += cw * x[m];
          b += cw;
        }
      }
    }
    std::size_t vs = 0, vt = 0, es = 0, et = 0;
    for (const auto& r : valid) {
      standardized(r.x, x);
      double s = b;
      for (std::size_t m = 0; m < dim; ++m) s += w[m] * x[m];
      const bool predicted_source = s > 0.0;
      if (r.y > 0) {
        ++vs;
        es += predicted_source ? 0 : 1;
      } else {
        ++vt;
        et += predicted_source ? 1 : 0;
      }
    }
    total_err += 0.5 * (static_cast<double>(es) / vs + static_cast<double>(et) / vt);
  }
  return total_err / k;
}

double estimate_beta(const FeatureBatch& source, const FeatureBatch& target,
                     const AdaptationConfig& cfg) {
  cfg.validate();
  if (cfg.beta_mode == BetaMode::kFixed) {
    return std::clamp(cfg.fixed_beta, cfg.beta_min, cfg.beta_max);
  }
  if (source.size() == 0 || target.size() == 0) {
    throw ArgumentError("estimate_beta: both feature batches must be nonempty");
  }
  return beta_from_error(domain_discriminator_error(source.features, target.features, cfg), cfg);
}

}  // namespace hsi
