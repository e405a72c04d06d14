#include <algorithm>
#include <cmath>
#include <map>

#include "hsi/trainers.hpp"
#include "fann_step.hpp"
#include "train_common.hpp"

namespace hsi {

namespace {

using detail::argmax;

std::vector<int> aligned_taps(const FannSpec& spec, bool source) {
  std::vector<int> taps;
  for (const auto& [s, t] : spec.aligned_layer_ids) taps.push_back((source ? s : t) + 1);
  return taps;
}

void project(const std::vector<Tensor>& proj, std::span<const double> f, std::span<double> z) {
  const auto& W = proj[0].data;
  const auto& b = proj[1].data;
  const std::size_t A = b.size();
  for (std::size_t a = 0; a < A; ++a) z[a] = b[a];
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double fk = f[k];
    if (fk == 0.0) continue;
    const double* w = W.data() + k * A;
    for (std::size_t a = 0; a < A; ++a) z[a] += fk * w[a];
  }
}

void project_backward(const std::vector<Tensor>& proj, std::span<const double> f,
                      std::span<const double> dz, std::vector<Tensor>& grad,
                      std::vector<double>& df) {
  const auto& W = proj[0].data;
  const std::size_t A = dz.size();
  auto& gW = grad[0].data;
  auto& gb = grad[1].data;
  df.assign(f.size(), 0.0);
  for (std::size_t a = 0; a < A; ++a) gb[a] += dz[a];
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double* w = W.data() + k * A;
    double* g = gW.data() + k * A;
    double s = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      g[a] += f[k] * dz[a];
      s += w[a] * dz[a];
    }
    df[k] = s;
  }
}

struct Branch {
  const Network* net;
  const ParamStore* params;
  std::vector<int> taps;
  int last_tap;
  int proj_offset;  // 0 source, 1 target
};

Branch branch_of(const FannModel& m, const Network& net, Domain d) {
  const bool src = d == Domain::kSource;
  Branch b{&net, src ? &m.source_params : &m.target_params, aligned_taps(m.spec, src), 0,
           src ? 0 : 1};
  b.last_tap = *std::max_element(b.taps.begin(), b.taps.end());
  return b;
}

// Projection onto the ball of the given radius.
void rescale(std::span<double> z, double radius) {
  if (radius <= 0.0) return;
  double n = 0.0;
  for (double v : z) n += v * v;
  n = std::sqrt(n);
  if (n <= radius) return;
  for (auto& v : z) v *= radius / n;
}

void rescale_backward(std::span<const double> raw, std::span<double> du, double radius) {
  if (radius <= 0.0) return;
  double n = 0.0, dot = 0.0;
  for (double v : raw) n += v * v;
  n = std::sqrt(n);
  if (n <= radius) return;
  for (std::size_t a = 0; a < raw.size(); ++a) dot += raw[a] / n * du[a];
  for (std::size_t a = 0; a < raw.size(); ++a) du[a] = radius / n * (du[a] - raw[a] / n * dot);
}

// Projected features of one sample for every pair, side by side.
std::vector<double> embed(const FannModel& m, const Branch& b, std::span<const double> x,
                          DropoutMode mode, Rng* rng, Trace* trace,
                          std::vector<double>* raw = nullptr) {
  const std::size_t P = m.num_pairs(), A = static_cast<std::size_t>(m.align_dim);
  Trace tr = b.net->forward_to(*b.params, x, mode, rng, b.last_tap);
  std::vector<double> z(P * A);
  for (std::size_t p = 0; p < P; ++p) {
    project(m.projections.layers[2 * p + b.proj_offset], tr.acts[b.taps[p]],
            std::span<double>(z).subspan(p * A, A));
  }
  if (raw) *raw = z;
  for (std::size_t p = 0; p < P; ++p) rescale(std::span<double>(z).subspan(p * A, A), m.align_radius);
  if (trace) *trace = std::move(tr);
  return z;
}

void check_domain_patches(const FannModel& m, const PatchSet& patches, Domain d) {
  const Shape3 want = d == Domain::kSource ? m.source_input : m.target_input;
  if (!(patch_shape(patches) == want)) {
    throw ShapeError(std::string(to_string(d)) + " patches " + to_string(patch_shape(patches)) +
                     " do not match branch input " + to_string(want));
  }
}

}  // namespace

namespace detail {

FannStepStats fann_step(const FannModel& m, const std::vector<double>& weights,
                        bool stability_shift, const PatchSet& source,
                        const std::vector<std::size_t>& sb, const PatchSet& target,
                        const std::vector<std::size_t>& tb, DropoutMode mode, Rng* rng,
                        FannGrads& g) {
  const std::size_t P = m.num_pairs(), A = static_cast<std::size_t>(m.align_dim);
  const Network src_net(m.spec.source_branch, m.source_input);
  const Network tgt_net(m.spec.target_branch, m.target_input);
  const Network head_net(m.head, {1, 1, static_cast<int>(P * A)});
  const Branch bs = branch_of(m, src_net, Domain::kSource);
  const Branch bt = branch_of(m, tgt_net, Domain::kTarget);
  g.source = m.source_params.zeros_like();
  g.target = m.target_params.zeros_like();
  g.projections = m.projections.zeros_like();
  g.head = m.head_params.zeros_like();

  struct Item {
    Trace trace;
    std::vector<double> z;
    std::vector<double> raw;
    std::vector<double> dz;
  };
  FannStepStats st;
  st.datl.assign(P, 0.0);
  std::vector<Item> si(sb.size()), ti(tb.size());
  const auto run = [&](const Branch& br, const PatchSet& ps, const std::vector<std::size_t>& idx,
                       std::vector<Item>& items, double& ce, bool is_target) {
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (std::size_t q = 0; q < idx.size(); ++q) {
      auto& it = items[q];
      it.z = embed(m, br, ps.sample(idx[q]), mode, rng, &it.trace, &it.raw);
      const Trace ht = head_net.forward(m.head_params, it.z, mode, rng);
      const auto& prob = ht.acts.back();
      const int y = ps.labels[idx[q]] - 1;
      ce += -std::log(std::max(prob[y], 1e-300)) * inv;
      if (is_target) st.correct_target += static_cast<int>(argmax(prob)) == y;
      GradSeeds seeds(head_net.num_taps());
      seeds.logits = cross_entropy_logit_grad(prob, y);
      for (auto& v : seeds.logits) v *= inv;
      head_net.backward(m.head_params, ht, seeds, g.head, 0, &it.dz);
    }
  };
  run(bs, source, sb, si, st.ce_source, false);
  run(bt, target, tb, ti, st.ce_target, true);

  for (std::size_t p = 0; p < P; ++p) {
    if (weights[p] <= 0.0) continue;
    FeatureBatch fs{Domain::kSource, Matrix(si.size(), A), {}};
    FeatureBatch ft{Domain::kTarget, Matrix(ti.size(), A), {}};
    for (std::size_t q = 0; q < si.size(); ++q) {
      std::copy_n(si[q].z.begin() + p * A, A, fs.features.row(q).begin());
      fs.labels.push_back(source.labels[sb[q]]);
    }
    for (std::size_t q = 0; q < ti.size(); ++q) {
      std::copy_n(ti[q].z.begin() + p * A, A, ft.features.row(q).begin());
      ft.labels.push_back(target.labels[tb[q]]);
    }
    DatlResult r;
    try {
      r = datl_loss(fs, ft, m.betas[p], stability_shift, true);
    } catch (const DegenerateSupportError&) {
      continue;
    }
    st.datl[p] = weights[p] * r.loss;
    for (std::size_t q = 0; q < si.size(); ++q) {
      for (std::size_t a = 0; a < A; ++a) si[q].dz[p * A + a] += weights[p] * r.grad_source(q, a);
    }
    for (std::size_t q = 0; q < ti.size(); ++q) {
      for (std::size_t a = 0; a < A; ++a) ti[q].dz[p * A + a] += weights[p] * r.grad_target(q, a);
    }
  }

  const auto back = [&](const Branch& br, std::vector<Item>& items, ParamStore& grads) {
    std::vector<double> df;
    for (auto& it : items) {
      GradSeeds seeds(br.net->num_taps());
      for (std::size_t p = 0; p < P; ++p) {
        rescale_backward(std::span<const double>(it.raw).subspan(p * A, A),
                         std::span<double>(it.dz).subspan(p * A, A), m.align_radius);
        project_backward(m.projections.layers[2 * p + br.proj_offset], it.trace.acts[br.taps[p]],
                         std::span<const double>(it.dz).subspan(p * A, A),
                         g.projections.layers[2 * p + br.proj_offset], df);
        auto& tap = seeds.taps[br.taps[p]];
        if (tap.empty()) {
          tap = df;
        } else {
          for (std::size_t k = 0; k < df.size(); ++k) tap[k] += df[k];
        }
      }
      br.net->backward(*br.params, it.trace, seeds, grads);
    }
  };
  back(bs, si, g.source);
  back(bt, ti, g.target);
  return st;
}

}  // namespace detail

namespace {

// Interleaves classes so that consecutive windows cover them evenly.
std::vector<std::size_t> stratified_order(const std::vector<int>& labels, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i]].push_back(i);
  std::size_t longest = 0;
  for (auto& [y, v] : by) {
    shuffle(v, rng);
    longest = std::max(longest, v.size());
  }
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < longest; ++r) {
    for (auto& [y, v] : by) {
      if (r < v.size()) out.push_back(v[r]);
    }
  }
  return out;
}

std::vector<std::size_t> window_of(const std::vector<std::size_t>& order, std::size_t step,
                                   std::size_t size) {
  std::vector<std::size_t> out(size);
  for (std::size_t q = 0; q < size; ++q) out[q] = order[(step * size + q) % order.size()];
  return out;
}

}  // namespace

namespace {

// target_labeled == nullptr trains the source branch and head alone.
FannModel fit_fann(const FannSpec& spec, const PatchSet& source_labeled,
                   const PatchSet* target_labeled, const TrainConfig& cfg,
                   const PatchSet* target_unlabeled) {
  cfg.validate();
  validate(spec);
  if (spec.aligned_layer_ids.empty()) throw StructureError("FANN needs at least one aligned pair");
  const PatchSet no_target;
  const PatchSet& tgt = target_labeled ? *target_labeled : no_target;
  source_labeled.require_labeled("source training set");
  tgt.require_labeled("target training set");
  if (source_labeled.size() == 0 || (target_labeled && tgt.size() == 0)) {
    throw ArgumentError("FANN needs labeled samples in both domains");
  }
  const int C = spec.num_classes();
  if (source_labeled.num_classes() > C || tgt.num_classes() > C) {
    throw StructureError("labels exceed the head's " + std::to_string(C) + " classes");
  }
  if (spec.source_branch.input_bands != source_labeled.bands ||
      (target_labeled && spec.target_branch.input_bands != tgt.bands)) {
    throw ShapeError("branch input bands do not match the patches");
  }
  const std::size_t P = spec.aligned_layer_ids.size();
  if (!cfg.datl_weights.empty() && cfg.datl_weights.size() != P) {
    throw ConfigError("trainer.datl_weights: expected " + std::to_string(P) + " weights, got " +
                      std::to_string(cfg.datl_weights.size()));
  }
  const std::size_t A = static_cast<std::size_t>(cfg.align_dim);

  FannModel m;
  m.spec = spec;
  m.source_input = patch_shape(source_labeled);
  m.target_input = target_labeled ? patch_shape(tgt)
                                 : Shape3{m.source_input.h, m.source_input.w,
                                          spec.target_branch.input_bands};
  m.align_dim = cfg.align_dim;
  m.align_radius = cfg.align_radius;
  m.seed = cfg.seed;
  m.config_hash = cfg.hash();
  const std::uint64_t init = mix_seed(cfg.seed, detail::kInitStream);
  m.source_params = init_params(spec.source_branch, m.source_input, mix_seed(init, 1));
  m.target_params = init_params(spec.target_branch, m.target_input, mix_seed(init, 2));
  const Network src_net(spec.source_branch, m.source_input);
  const Network tgt_net(spec.target_branch, m.target_input);
  const Branch bs = branch_of(m, src_net, Domain::kSource);
  const Branch bt = branch_of(m, tgt_net, Domain::kTarget);

  Rng proj_rng(mix_seed(cfg.seed, detail::kProjectionStream));
  m.projections.seed = mix_seed(cfg.seed, detail::kProjectionStream);
  for (std::size_t p = 0; p < P; ++p) {
    for (const Branch* b : {&bs, &bt}) {
      const int d = static_cast<int>(b->net->shapes()[b->taps[p]].size());
      Tensor W({d, static_cast<int>(A)}), bias({static_cast<int>(A)});
      const double lim = std::sqrt(3.0 / d);
      for (auto& v : W.data) v = uniform(proj_rng, -lim, lim);
      m.projections.layers.push_back({W, bias});
    }
  }
  m.head = spec.head;
  m.head.input_bands = static_cast<int>(P * A);
  const Shape3 head_in{1, 1, static_cast<int>(P * A)};
  m.head_params = init_params(m.head, head_in, mix_seed(cfg.seed, detail::kHeadInitStream));

  std::vector<double> weights(P, cfg.datl_weight);
  if (!cfg.datl_weights.empty()) weights = cfg.datl_weights;
  if (!target_labeled) weights.assign(P, 0.0);
  m.betas.assign(P, 0.0);

  detail::Sgd opt_s(m.source_params, cfg.learning_rate, cfg.momentum);
  detail::Sgd opt_t(m.target_params, cfg.learning_rate, cfg.momentum);
  detail::Sgd opt_p(m.projections, cfg.learning_rate, cfg.momentum);
  detail::Sgd opt_h(m.head_params, cfg.learning_rate, cfg.momentum);
  detail::FannGrads g;

  Rng order_rng(mix_seed(cfg.seed, detail::kOrderStream));
  Rng drop_rng(mix_seed(cfg.seed, detail::kDropoutStream));
  Rng pad_rng(mix_seed(cfg.seed, detail::kPadStream));

  // Fixed snapshot subsets for the domain discriminator.
  PatchSet target_pool = tgt;
  if (target_unlabeled && target_unlabeled->size() > 0) {
    check_domain_patches(m, *target_unlabeled, Domain::kTarget);
    target_pool.append(*target_unlabeled);
  }
  const auto snapshot = [&](const PatchSet& ps) {
    auto idx = permutation(ps.size(), pad_rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cfg.pad_sample_cap)));
    std::sort(idx.begin(), idx.end());
    return ps.subset(idx);
  };
  const PatchSet pad_source = snapshot(source_labeled);
  const PatchSet pad_target = snapshot(target_pool);
  bool any_weight = false;
  for (double w : weights) any_weight = any_weight || w > 0.0;

  const std::size_t Ns = source_labeled.size(), Nt = tgt.size();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t Bs = std::min(B, Ns), Bt = std::min(B, Nt);
  const std::size_t steps = (std::max(Ns, Nt) + B - 1) / B;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (any_weight && epoch % cfg.beta_refresh == 0) {
      for (std::size_t p = 0; p < P; ++p) {
        if (weights[p] <= 0.0) continue;
        FeatureBatch fs{Domain::kSource, fann_features(m, pad_source, Domain::kSource, int(p)),
                        pad_source.labels};
        FeatureBatch ft{Domain::kTarget, fann_features(m, pad_target, Domain::kTarget, int(p)),
                        pad_target.labels};
        AdaptationConfig ac = cfg.adaptation;
        ac.seed = mix_seed(cfg.seed, detail::kPadStream + 1000 * (epoch + 1) + p);
        m.betas[p] = estimate_beta(fs, ft, ac);
      }
    }
    const auto s_order = permutation(Ns, order_rng);
    const auto t_order = stratified_order(tgt.labels, order_rng);
    double ce_s = 0.0, ce_t = 0.0;
    std::size_t correct_t = 0, seen_t = 0;
    std::vector<double> datl(P, 0.0);
    for (std::size_t step = 0; step < steps; ++step) {
      const auto sb = window_of(s_order, step, Bs);
      const auto tb = Bt ? window_of(t_order, step, Bt) : std::vector<std::size_t>{};
      const auto st = detail::fann_step(m, weights, cfg.adaptation.stability_shift, source_labeled,
                                        sb, tgt, tb, DropoutMode::kSample, &drop_rng, g);
      ce_s += st.ce_source / static_cast<double>(steps);
      ce_t += st.ce_target / static_cast<double>(steps);
      for (std::size_t p = 0; p < P; ++p) datl[p] += st.datl[p] / static_cast<double>(steps);
      correct_t += st.correct_target;
      seen_t += tb.size();
      opt_s.step(m.source_params, g.source, 1.0);
      opt_t.step(m.target_params, g.target, 1.0);
      opt_p.step(m.projections, g.projections, 1.0);
      opt_h.step(m.head_params, g.head, 1.0);
    }
    double total = ce_s + ce_t;
    for (double d : datl) total += d;
    detail::require_finite(total, "FANN loss", epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.values = {{"ce_source", ce_s}, {"ce_target", ce_t}};
    for (std::size_t p = 0; p < P; ++p) rec.values.emplace_back("datl_" + std::to_string(p + 1), datl[p]);
    for (std::size_t p = 0; p < P; ++p) rec.values.emplace_back("beta_" + std::to_string(p + 1), m.betas[p]);
    rec.values.emplace_back("total", total);
    rec.values.emplace_back("accuracy_target",
                            static_cast<double>(correct_t) / static_cast<double>(std::max<std::size_t>(seen_t, 1)));
    m.history.push_back(std::move(rec));
  }
  m.trained = true;
  return m;
}

}  // namespace

FannModel train_fann(const FannSpec& spec, const PatchSet& source_labeled,
                     const PatchSet& target_labeled, const TrainConfig& cfg,
                     const PatchSet* target_unlabeled) {
  return fit_fann(spec, source_labeled, &target_labeled, cfg, target_unlabeled);
}

FannModel train_source_only(const FannSpec& spec, const PatchSet& source_labeled,
                            const TrainConfig& cfg) {
  return fit_fann(spec, source_labeled, nullptr, cfg, nullptr);
}

Matrix fann_features(const FannModel& m, const PatchSet& patches, Domain domain, int pair) {
  check_domain_patches(m, patches, domain);
  const std::size_t P = m.num_pairs(), A = static_cast<std::size_t>(m.align_dim);
  if (pair != kConcatenated && (pair < 0 || static_cast<std::size_t>(pair) >= P)) {
    throw ArgumentError("aligned pair " + std::to_string(pair) + " out of range");
  }
  const bool src = domain == Domain::kSource;
  const Network net(src ? m.spec.source_branch : m.spec.target_branch,
                    src ? m.source_input : m.target_input);
  const Branch b = branch_of(m, net, domain);
  const std::size_t width = pair == kConcatenated ? P * A : A;
  Matrix out(patches.size(), width);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto z = embed(m, b, patches.sample(i), DropoutMode::kOff, nullptr, nullptr);
    const std::size_t from = pair == kConcatenated ? 0 : static_cast<std::size_t>(pair) * A;
    std::copy_n(z.begin() + from, width, out.row(i).begin());
  }
  return out;
}

std::vector<int> fann_predict(const FannModel& m, const PatchSet& patches, Domain domain) {
  const Matrix z = fann_features(m, patches, domain, kConcatenated);
  const Network head_net(m.head, {1, 1, static_cast<int>(z.cols)});
  std::vector<int> out(z.rows);
  for (std::size_t i = 0; i < z.rows; ++i) {
    const Trace t = head_net.forward(m.head_params, z.row(i), DropoutMode::kOff, nullptr);
    out[i] = static_cast<int>(argmax(t.acts.back())) + 1;
  }
  return out;
}

Evaluation evaluate_fann(const FannModel& m, const PatchSet& test, Domain domain) {
  if (!m.trained) throw StateError("FANN model has not been trained");
  if (test.size() == 0) throw ArgumentError("evaluation needs a nonempty test set");
  test.require_labeled("test set");
  return evaluate_labels(test.labels, fann_predict(m, test, domain), m.num_classes());
}

double layer_probe(const FannModel& m, int pair, const PatchSet& source_train,
                   const PatchSet& target_train, const PatchSet& target_test,
                   const ProbeConfig& probe) {
  if (!m.trained) throw StateError("layer_probe needs a trained FANN model");
  if (target_test.size() == 0) throw ArgumentError("probe needs a nonempty test set");
  source_train.require_labeled("probe source set");
  target_train.require_labeled("probe target set");
  target_test.require_labeled("probe test set");
  const Matrix xs = fann_features(m, source_train, Domain::kSource, pair);
  const Matrix xt = fann_features(m, target_train, Domain::kTarget, pair);
  Matrix x(xs.rows + xt.rows, xs.cols);
  std::copy(xs.data.begin(), xs.data.end(), x.data.begin());
  std::copy(xt.data.begin(), xt.data.end(), x.data.begin() + xs.data.size());
  std::vector<int> y = source_train.labels;
  y.insert(y.end(), target_train.labels.begin(), target_train.labels.end());
  Matrix test = fann_features(m, target_test, Domain::kTarget, pair);

  const std::size_t n = x.rows, d = x.cols, C = static_cast<std::size_t>(m.num_classes());
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += x(i, k) / n;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (x(i, k) - mean[k]) * (x(i, k) - mean[k]) / n;
  }
  for (auto& s : scale) s = s > 1e-24 ? 1.0 / std::sqrt(s) : 0.0;
  for (Matrix* mat : {&x, &test}) {
    for (std::size_t i = 0; i < mat->rows; ++i) {
      for (std::size_t k = 0; k < d; ++k) (*mat)(i, k) = ((*mat)(i, k) - mean[k]) * scale[k];
    }
  }
  std::vector<double> W(d * C, 0.0), b(C, 0.0), gW(d * C), gb(C), logit(C);
  const auto scores = [&](std::span<const double> row) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < d; ++k) s += row[k] * W[k * C + c];
      logit[c] = s;
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (auto& v : logit) z += (v = std::exp(v - mx));
    for (auto& v : logit) v /= z;
  };
  for (int it = 0; it < probe.iterations; ++it) {
    std::fill(gW.begin(), gW.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(i);
      scores(row);
      logit[y[i] - 1] -= 1.0;
      for (std::size_t c = 0; c < C; ++c) {
        gb[c] += logit[c] / n;
        for (std::size_t k = 0; k < d; ++k) gW[k * C + c] += row[k] * logit[c] / n;
      }
    }
    for (std::size_t q = 0; q < W.size(); ++q) W[q] -= probe.learning_rate * (gW[q] + probe.l2 * W[q]);
    for (std::size_t c = 0; c < C; ++c) b[c] -= probe.learning_rate * gb[c];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.rows; ++i) {
    scores(test.row(i));
    correct += static_cast<int>(argmax(logit)) + 1 == target_test.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows);
}

}  // namespace hsi
