#include "hsi/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hsi/rng.hpp"

namespace hsi {

namespace {

void check_range(const std::optional<Range>& r, double lo, double hi, bool open_hi,
                 const char* name) {
  if (!r) return;
  const auto [a, b] = *r;
  if (a > b) throw ArgumentError(std::string(name) + ": lower bound exceeds upper bound");
  if (a < lo || (open_hi ? b >= hi : b > hi)) {
    throw ArgumentError(std::string(name) + ": outside the allowed interval");
  }
}

std::size_t offset(const Sample& s, int r, int c) {
  return (static_cast<std::size_t>(r) * s.width + c) * s.bands;
}

Sample rotate_quarter(const Sample& s) {
  Sample out = s;
  out.height = s.width;
  out.width = s.height;
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      const auto src = offset(s, c, s.width - 1 - r);
      std::copy_n(s.values.begin() + src, s.bands, out.values.begin() + offset(out, r, c));
    }
  }
  return out;
}

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const auto src = offset(s, r, s.width - 1 - c);
      std::copy_n(s.values.begin() + src, s.bands, out.values.begin() + offset(out, r, c));
    }
  }
  return out;
}

void push_sample(PatchSet& out, const Sample& s, std::pair<int, int> coord) {
  out.push_back(s.values, s.label, coord);
}

}  // namespace

Sample sample_of(const PatchSet& patches, std::size_t i, bool reflectance) {
  Sample s;
  s.height = patches.window;
  s.width = patches.window;
  s.bands = patches.bands;
  const auto v = patches.sample(i);
  s.values.assign(v.begin(), v.end());
  s.label = patches.labels[i];
  s.reflectance = reflectance;
  return s;
}

void AugmentPlan::validate() const {
  if (scale_range && scale_range->first <= 0.0) {
    throw ArgumentError("scale_range: factors must be positive");
  }
  check_range(scale_range, 0.0, std::numeric_limits<double>::infinity(), false, "scale_range");
  check_range(mix_weight_range, 0.0, 1.0, false, "mix_weight_range");
  check_range(occlusion_fraction_range, 0.0, 1.0, true, "occlusion_fraction_range");
  if (block_window < 1 || block_window % 2 == 0) {
    throw ArgumentError("block_window: must be a positive odd integer");
  }
  if (knn_k < 0) throw ArgumentError("knn_k: must be >= 0");
  if (knn_radius < 0.0) throw ArgumentError("knn_radius: must be >= 0");
}

Sample dihedral(const Sample& s, int k) {
  if (s.height != s.width) {
    throw ArgumentError("dihedral transforms need a square window, got " +
                        std::to_string(s.height) + "x" + std::to_string(s.width));
  }
  if (k < 0 || k > 7) throw ArgumentError("dihedral index must lie in 0..7");
  Sample out = s;
  for (int q = 0; q < k % 4; ++q) out = rotate_quarter(out);
  if (k >= 4) out = flip_horizontal(out);
  return out;
}

std::vector<Sample> dihedral_variants(const Sample& s) {
  std::vector<Sample> out;
  out.reserve(8);
  for (int k = 0; k < 8; ++k) out.push_back(dihedral(s, k));
  return out;
}

Sample virtual_scale(const Sample& s, double factor) {
  if (!(factor > 0.0)) throw ArgumentError("scale factor must be positive");
  Sample out = s;
  for (auto& v : out.values) {
    v *= factor;
    if (out.reflectance) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Sample virtual_mix(const Sample& s1, const Sample& s2, double weight) {
  if (s1.label != s2.label) {
    throw ArgumentError("virtual_mix needs samples of one class, got " + std::to_string(s1.label) +
                        " and " + std::to_string(s2.label));
  }
  if (s1.height != s2.height || s1.width != s2.width || s1.bands != s2.bands) {
    throw ArgumentError("virtual_mix needs samples of one shape");
  }
  if (weight < 0.0 || weight > 1.0) throw ArgumentError("mix weight must lie in [0, 1]");
  Sample out = s1;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    out.values[k] = weight * s1.values[k] + (1.0 - weight) * s2.values[k];
  }
  return out;
}

std::pair<int, int> occlusion_extent(int height, int width, double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw ArgumentError("occlusion fraction must lie in [0, 1)");
  }
  const long n = std::lround(fraction * height * width);
  if (n == 0) return {0, 0};
  std::pair<int, int> best{1, 1};
  long best_gap = std::numeric_limits<long>::max();
  int best_skew = std::numeric_limits<int>::max();
  for (int rh = 1; rh <= height; ++rh) {
    for (int rw = 1; rw <= width; ++rw) {
      const long gap = std::labs(static_cast<long>(rh) * rw - n);
      const int skew = std::abs(rh - rw);
      if (gap < best_gap || (gap == best_gap && skew < best_skew)) {
        best = {rh, rw};
        best_gap = gap;
        best_skew = skew;
      }
    }
  }
  return best;
}

Sample random_occlusion(const Sample& s, double fraction, std::uint64_t seed) {
  const auto [rh, rw] = occlusion_extent(s.height, s.width, fraction);
  if (rh == 0) return s;
  std::vector<double> mean(s.bands, 0.0);
  const int pixels = s.height * s.width;
  for (int p = 0; p < pixels; ++p) {
    for (int b = 0; b < s.bands; ++b) mean[b] += s.values[static_cast<std::size_t>(p) * s.bands + b];
  }
  for (auto& m : mean) m /= pixels;
  Rng rng(mix_seed(seed, 0x0CC1));
  const int r0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.height - rh + 1)));
  const int c0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.width - rw + 1)));
  Sample out = s;
  for (int r = r0; r < r0 + rh; ++r) {
    for (int c = c0; c < c0 + rw; ++c) {
      std::copy(mean.begin(), mean.end(), out.values.begin() + offset(out, r, c));
    }
  }
  return out;
}

std::vector<BlockPair> block_pairs(const PatchSet& blocks, int block_window,
                                   std::uint64_t seed) {
  if (blocks.window != block_window) {
    throw ArgumentError("block_pairs expects " + std::to_string(block_window) + "x" +
                        std::to_string(block_window) + " blocks, got window " +
                        std::to_string(blocks.window));
  }
  blocks.require_labeled("block_pairs");
  if (blocks.size() < 2) throw PairingError("block_pairs needs at least 2 labeled blocks");
  std::vector<BlockPair> same, diff;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (std::size_t j = i + 1; j < blocks.size(); ++j) {
      if (blocks.labels[i] == blocks.labels[j]) {
        same.push_back({i, j, blocks.labels[i]});
      } else {
        diff.push_back({i, j, kDifferentPair});
      }
    }
  }
  if (!same.empty() && !diff.empty() && same.size() != diff.size()) {
    auto& larger = same.size() > diff.size() ? same : diff;
    const std::size_t keep = std::min(same.size(), diff.size());
    Rng rng(mix_seed(seed, 0xB10C));
    auto order = permutation(larger.size(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<BlockPair> kept;
    kept.reserve(keep);
    for (auto i : order) kept.push_back(larger[i]);
    larger = std::move(kept);
  }
  std::vector<BlockPair> out;
  out.reserve(same.size() + diff.size());
  std::merge(same.begin(), same.end(), diff.begin(), diff.end(), std::back_inserter(out),
             [](const BlockPair& a, const BlockPair& b) {
               return std::pair(a.first, a.second) < std::pair(b.first, b.second);
             });
  return out;
}

Expansion knn_pseudo_expand(const PatchSet& labeled, const PatchSet& pool, int k,
                            double radius) {
  if (k < 1) throw ArgumentError("knn_pseudo_expand: k must be >= 1");
  if (labeled.size() == 0) throw ArgumentError("knn_pseudo_expand: labeled set is empty");
  if (labeled.bands != pool.bands) throw ShapeError("knn_pseudo_expand: band count mismatch");
  labeled.require_labeled("knn_pseudo_expand");
  Expansion out;
  out.samples.window = pool.window;
  out.samples.bands = pool.bands;
  out.samples.domain = pool.domain;
  const double r2 = radius * radius;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    cand.clear();
    const auto [pr, pc] = pool.coords[p];
    const auto spec = pool.center(p);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const double dr = labeled.coords[i].first - pr;
      const double dc = labeled.coords[i].second - pc;
      if (dr * dr + dc * dc > r2) continue;
      const auto other = labeled.center(i);
      double d = 0.0;
      for (std::size_t b = 0; b < spec.size(); ++b) d += (spec[b] - other[b]) * (spec[b] - other[b]);
      cand.emplace_back(d, i);
    }
    if (cand.size() < static_cast<std::size_t>(k)) continue;
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    const int c = labeled.labels[cand[0].second];
    bool unanimous = true;
    for (int q = 1; q < k && unanimous; ++q) unanimous = labeled.labels[cand[q].second] == c;
    if (!unanimous) continue;
    out.samples.push_back(pool.sample(p), c, pool.coords[p]);
    out.pool_indices.push_back(p);
  }
  return out;
}

PatchSet apply_plan(const PatchSet& labeled, const AugmentPlan& plan, const PatchSet* pool,
                    bool reflectance) {
  plan.validate();
  labeled.require_labeled("apply_plan");
  PatchSet out = labeled;
  Rng rng(mix_seed(plan.seed, 0xA116));
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Sample s = sample_of(labeled, i, reflectance);
    const auto coord = labeled.coords[i];
    if (plan.dihedral) {
      for (int k = 1; k < 8; ++k) push_sample(out, dihedral(s, k), coord);
    }
    if (plan.scale_range) {
      push_sample(out, virtual_scale(s, uniform(rng, plan.scale_range->first, plan.scale_range->second)),
                  coord);
    }
    if (plan.mix_weight_range) {
      std::vector<std::size_t> mates;
      for (std::size_t j = 0; j < labeled.size(); ++j) {
        if (j != i && labeled.labels[j] == s.label) mates.push_back(j);
      }
      if (!mates.empty()) {
        const auto j = mates[uniform_index(rng, mates.size())];
        const double w = uniform(rng, plan.mix_weight_range->first, plan.mix_weight_range->second);
        push_sample(out, virtual_mix(s, sample_of(labeled, j, reflectance), w), coord);
      }
    }
    if (plan.occlusion_fraction_range) {
      const double f =
          uniform(rng, plan.occlusion_fraction_range->first, plan.occlusion_fraction_range->second);
      push_sample(out, random_occlusion(s, f, rng()), coord);
    }
  }
  if (plan.knn_k > 0 && pool && pool->size() > 0) {
    out.append(knn_pseudo_expand(labeled, *pool, plan.knn_k, plan.knn_radius).samples);
  }
  return out;
}

}  // namespace hsi
