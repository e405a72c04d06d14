// Runs every acceptance criterion, prints one PASS/FAIL line each and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hsi/active_loop.hpp"
#include "hsi/datl.hpp"
#include "hsi/inference.hpp"
#include "hsi/network.hpp"
#include "hsi/patches.hpp"
#include "hsi/split.hpp"
#include "hsi/synth.hpp"
#include "hsi/trainers.hpp"
#include "oracles/augment_suite.hpp"
#include "oracles/datl_instances.hpp"
#include "oracles/datl_oracle.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/layer_gradcheck.hpp"
#include "oracles/stats.hpp"

using namespace hsi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string list(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

void info(const std::string& line) { std::printf("      info: %s\n", line.c_str()); }

// ---- 1 ---------------------------------------------------------------

Outcome datl_oracle() {
  double worst = 0.0;
  int compared = 0, degenerate_agree = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto inst = oracle::random_instance(0xC1 + s);
    const auto src = oracle::rows_of(inst.source.features);
    const auto tgt = oracle::rows_of(inst.target.features);
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      const auto want = oracle::neighbor_probs(src, tgt[j]);
      const auto got = neighbor_probs(inst.source, inst.target.row(j));
      for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
      const int c = inst.target.labels[j];
      const auto r = oracle::ratio(src, inst.source.labels, tgt[j], c);
      if (r) {
        worst = std::max(worst, std::abs(class_prob(inst.source, inst.target.row(j), c) - *r) /
                                    std::max(1.0, *r));
      }
    }
    const auto want = oracle::datl_loss(src, inst.source.labels, tgt, inst.target.labels, inst.beta);
    if (!want) {
      try {
        datl_loss(inst.source, inst.target, inst.beta);
      } catch (const DegenerateSupportError&) {
        ++degenerate_agree;
        continue;
      }
      return {false, "library accepted an instance the oracle finds degenerate"};
    }
    worst = std::max(worst, std::abs(datl_loss(inst.source, inst.target, inst.beta).loss - *want));
    ++compared;
  }
  return {worst <= 1e-10, "max deviation " + fmt("%.2e", worst) + " (<= 1e-10) over " +
                              std::to_string(compared) + " losses, " +
                              std::to_string(degenerate_agree) + " degenerate instances agreed"};
}

// ---- 2 ---------------------------------------------------------------

Outcome gradients() {
  double worst = 0.0;
  int datl_cases = 0;
  for (std::uint64_t s = 0; datl_cases < 10; ++s) {
    auto inst = oracle::random_instance(0xC2 + s);
    if (!oracle::datl_loss(oracle::rows_of(inst.source.features), inst.source.labels,
                           oracle::rows_of(inst.target.features), inst.target.labels, inst.beta)) {
      continue;
    }
    const auto r = datl_loss(inst.source, inst.target, inst.beta);
    const auto f = [&] { return datl_loss(inst.source, inst.target, inst.beta, true, false).loss; };
    worst = std::max(worst, oracle::relative_error(r.grad_source.data,
                                                   oracle::central_diff(inst.source.features.data, f)));
    worst = std::max(worst, oracle::relative_error(r.grad_target.data,
                                                   oracle::central_diff(inst.target.features.data, f)));
    ++datl_cases;
  }
  std::string per_kind;
  for (const auto& kind : oracle::layer_kinds()) {
    double k_worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) k_worst = std::max(k_worst, oracle::check_layer(kind, 0xC20 + s).worst());
    worst = std::max(worst, k_worst);
    per_kind += " " + kind + "=" + fmt("%.1e", k_worst);
  }
  return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " (< 1e-4); datl x10," + per_kind};
}

// ---- 3 ---------------------------------------------------------------

std::pair<Matrix, Matrix> gaussian_domains(double gap, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(60, 5), b(60, 5);
  for (auto& v : a.data) v = normal(rng);
  for (auto& v : b.data) v = normal(rng);
  for (std::size_t i = 0; i < 60; ++i) b(i, 0) += gap;
  return {a, b};
}

Outcome beta_calibration() {
  const bool exact = beta_from_error(0.5) == 0.0 && beta_from_error(0.0) == 1.0;
  AdaptationConfig cfg;
  std::vector<double> same, apart;
  for (std::uint64_t s = 0; s < 20; ++s) {
    cfg.seed = s;
    auto [a, b] = gaussian_domains(0.0, 0xC3 + s);
    same.push_back(beta_from_error(domain_discriminator_error(a, b, cfg)));
    auto [c, d] = gaussian_domains(8.0, 0xC3 + s);
    apart.push_back(beta_from_error(domain_discriminator_error(c, d, cfg)));
  }
  const double ms = oracle::median(same), ma = oracle::median(apart);
  return {exact && ms <= 0.2 && ma >= 0.8,
          std::string("endpoints ") + (exact ? "exact" : "WRONG") + ", median beta identical " +
              fmt("%.3f", ms) + " (<= 0.2), separated " + fmt("%.3f", ma) + " (>= 0.8)"};
}

// ---- 4 and 6 ---------------------------------------------------------

struct AdaptationRun {
  double fann = 0.0, source_only = 0.0, no_datl = 0.0;
  std::vector<double> probes;  // FA-1..FA-k, then concatenated
};
std::vector<AdaptationRun> adaptation_runs;

Outcome adaptation_lift() {
  const SynthConfig c = shifted_synth_config();
  const std::string topo = "fc-32 -> DATL <- fc-32; fc-16 -> DATL <- fc-16; fully connected-6";
  std::vector<double> lift, fann, so, ablation;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DomainPair dp = synth_domain_pair(c, seed);
    const SplitSpec ss = split_labels(dp.source.labels, 40, seed);
    const SplitSpec ts = split_labels(dp.target.labels, 3, seed + 100);
    const PatchSet src = extract_patches_at(dp.source.cube, dp.source.labels, 3, ss.train_indices, Domain::kSource);
    const PatchSet tgt = extract_patches_at(dp.target.cube, dp.target.labels, 3, ts.train_indices, Domain::kTarget);
    const PatchSet test = extract_patches_at(dp.target.cube, dp.target.labels, 3, ts.test_indices, Domain::kTarget);
    PatchSet unl = test;
    std::fill(unl.labels.begin(), unl.labels.end(), 0);
    const FannSpec spec = parse_fann_config(topo, c.source_grid.bands, c.target_grid.bands);
    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 30;
    tc.align_dim = 16;
    tc.learning_rate = 0.05;
    tc.datl_weight = 1.0;
    tc.align_radius = 0.5;
    const FannModel m = train_fann(spec, src, tgt, tc, &unl);
    const FannModel base = train_source_only(spec, src, tc);
    TrainConfig off = tc;
    off.datl_weight = 0.0;
    const FannModel plain = train_fann(spec, src, tgt, off, &unl);

    AdaptationRun r;
    r.fann = evaluate_fann(m, test, Domain::kTarget).oa;
    r.source_only = evaluate_fann(base, test, Domain::kSource).oa;
    r.no_datl = evaluate_fann(plain, test, Domain::kTarget).oa;
    for (int p = 0; p < static_cast<int>(m.num_pairs()); ++p) r.probes.push_back(layer_probe(m, p, src, tgt, test));
    r.probes.push_back(layer_probe(m, kConcatenated, src, tgt, test));
    adaptation_runs.push_back(r);
    fann.push_back(r.fann);
    so.push_back(r.source_only);
    lift.push_back(r.fann - r.source_only);
    ablation.push_back(r.fann - r.no_datl);
  }
  const double ml = oracle::median(lift);
  info("FANN OA per seed " + list(fann) + "; source-only " + list(so));
  info("same network with target labels but no alignment term: median FANN minus it " +
       fmt("%+.1f", 100.0 * oracle::median(ablation)) + " pts (" + list(ablation, "%+.3f") + ")");
  return {ml >= 0.10, "median lift " + fmt("%.1f", 100.0 * ml) + " pts (>= 10); FANN median " +
                          fmt("%.3f", oracle::median(fann)) + ", source-only median " +
                          fmt("%.3f", oracle::median(so))};
}

Outcome probe_ordering() {
  if (adaptation_runs.empty()) return {false, "no artifacts from the adaptation criterion"};
  const std::size_t k = adaptation_runs.front().probes.size();
  std::vector<double> medians;
  for (std::size_t p = 0; p < k; ++p) {
    std::vector<double> v;
    for (const auto& r : adaptation_runs) v.push_back(r.probes[p]);
    medians.push_back(oracle::median(v));
  }
  const double concat = medians.back();
  bool ok = true;
  std::string detail = "median probe OA";
  for (std::size_t p = 0; p + 1 < k; ++p) {
    ok = ok && concat >= medians[p];
    detail += " FA-" + std::to_string(p + 1) + " " + fmt("%.3f", medians[p]);
  }
  detail += ", concatenated " + fmt("%.3f", concat) + " (must be >= every layer)";
  for (std::size_t s = 0; s < adaptation_runs.size(); ++s) {
    info("seed " + std::to_string(s + 1) + " probes FA-1.. then concatenated: " + list(adaptation_runs[s].probes));
  }
  return {ok, detail};
}

// ---- 5 ---------------------------------------------------------------

Outcome pseudo_label_lift() {
  const SynthConfig c = shifted_synth_config();
  const NetworkSpec spec = parse_config("input-48 -> conv3-8 -> conv3-8 -> fc-32 -> fc-16 -> softmax-6");
  std::vector<double> rnd, fd1, fd4;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DomainPair dp = synth_domain_pair(c, seed);
    const HyperScene& sc = dp.source;
    const SplitSpec sp = split_labels(sc.labels, 5, seed);
    const PatchSet lab = extract_patches_at(sc.cube, sc.labels, 3, sp.train_indices);
    const PatchSet test = extract_patches_at(sc.cube, sc.labels, 3, sp.test_indices);
    PatchSet unl = extract_patches(sc.cube, sc.labels, 3, PixelSelection::kAll);
    std::fill(unl.labels.begin(), unl.labels.end(), 0);
    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 20;
    tc.batch_size = 32;
    const TrainedModel pre = pretrain_pseudo(spec, unl, tc);
    TrainConfig ft = tc;
    ft.epochs = 60;
    ft.batch_size = 8;
    TrainedModel scratch = pre;
    scratch.params = init_params(spec, pre.input, seed + 77);
    ft.freeze_depth = 0;
    rnd.push_back(evaluate(finetune(scratch, lab, ft), test).oa);
    ft.freeze_depth = 1;
    fd1.push_back(evaluate(finetune(pre, lab, ft), test).oa);
    ft.freeze_depth = 4;
    fd4.push_back(evaluate(finetune(pre, lab, ft), test).oa);
  }
  std::vector<double> lift1, lift4;
  for (std::size_t i = 0; i < rnd.size(); ++i) {
    lift1.push_back(fd1[i] - rnd[i]);
    lift4.push_back(fd4[i] - rnd[i]);
  }
  const double l1 = oracle::median(lift1), l4 = oracle::median(lift4);
  const double m1 = oracle::median(fd1), m4 = oracle::median(fd4);
  info("random init " + list(rnd) + "; freeze 1 " + list(fd1) + "; freeze 4 " + list(fd4));
  return {std::min(l1, l4) >= 0.05 && m4 >= m1,
          "median lift over random init " + fmt("%.1f", 100.0 * l1) + " pts at freeze 1, " +
              fmt("%.1f", 100.0 * l4) + " pts at freeze 4 (>= 5); median OA freeze 4 " +
              fmt("%.3f", m4) + " >= freeze 1 " + fmt("%.3f", m1)};
}

// ---- 7 ---------------------------------------------------------------

// Per-band z-scores from the pool's spectra (no labels involved).
void standardize(PatchSet& pool, PatchSet& test) {
  const int B = pool.bands;
  std::vector<double> mu(B, 0.0), sd(B, 0.0);
  const double n = static_cast<double>(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (int b = 0; b < B; ++b) mu[b] += pool.sample(i)[b] / n;
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (int b = 0; b < B; ++b) sd[b] += std::pow(pool.sample(i)[b] - mu[b], 2) / n;
  }
  for (auto& v : sd) v = std::sqrt(v) + 1e-12;
  for (PatchSet* ps : {&pool, &test}) {
    for (std::size_t i = 0; i < ps->size(); ++i) {
      for (int b = 0; b < B; ++b) ps->sample(i)[b] = (ps->sample(i)[b] - mu[b]) / sd[b];
    }
  }
}

struct AlResult {
  std::vector<double> need_random, need_entropy;
  bool conserved = true;
};

AlResult active_learning(bool standardized) {
  const SynthConfig c;
  const NetworkSpec spec = parse_config("input-48 -> fc-32 -> dropout-0.5 -> fc-16 -> softmax-6");
  const int budget = 90, step = 6;
  AlResult out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DomainPair dp = synth_domain_pair(c, seed);
    const SplitSpec sp = split_labels(dp.source.labels, 100, seed);
    PatchSet pool = extract_patches_at(dp.source.cube, dp.source.labels, 1, sp.train_indices);
    PatchSet test = extract_patches_at(dp.source.cube, dp.source.labels, 1, sp.test_indices);
    if (standardized) standardize(pool, test);
    LoopConfig lc;
    lc.train.seed = seed;
    lc.train.epochs = 200;
    lc.train.batch_size = 8;
    lc.train.learning_rate = 0.05;
    lc.query.seed = seed;
    const double full = evaluate(train_supervised(spec, pool, lc.train), test).oa;
    std::vector<std::size_t> initial;
    std::map<int, int> got;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (got[pool.labels[i]]++ < 1) initial.push_back(i);
    }
    for (auto strategy : {QueryStrategy::kRandom, QueryStrategy::kEntropy}) {
      const ALState s =
          run_loop(make_state(pool.size(), initial, budget, step), strategy, spec, pool, test, lc);
      std::vector<char> seen(pool.size(), 0);
      for (std::size_t i : s.labeled_idx) out.conserved = out.conserved && !seen[i]++;
      for (std::size_t i : s.pool_idx) out.conserved = out.conserved && !seen[i]++;
      out.conserved = out.conserved && s.labeled_idx.size() + s.pool_idx.size() == pool.size();
      for (std::size_t r = 0; r < s.history.size(); ++r) {
        out.conserved = out.conserved && s.history[r].labels_used == initial.size() + r * step;
      }
      const auto need = labels_to_reach(s.history, 0.9 * full);
      // Never reaching the target counts as one step beyond the budget.
      const double n = need ? static_cast<double>(*need) : initial.size() + budget + step;
      (strategy == QueryStrategy::kRandom ? out.need_random : out.need_entropy).push_back(n);
    }
  }
  return out;
}

Outcome al_efficiency() {
  const AlResult raw = active_learning(false);
  info("raw reflectance inputs: median labels random " + fmt("%.0f", oracle::median(raw.need_random)) +
       ", entropy " + fmt("%.0f", oracle::median(raw.need_entropy)));
  const AlResult r = active_learning(true);
  const double mr = oracle::median(r.need_random), me = oracle::median(r.need_entropy);
  info("standardized inputs, labels needed per seed: random " + list(r.need_random, "%.0f") +
       "; entropy " + list(r.need_entropy, "%.0f"));
  return {me <= mr && r.conserved && raw.conserved,
          "median labels to reach 90% of full-pool OA: entropy " + fmt("%.0f", me) +
              " <= random " + fmt("%.0f", mr) + "; conservation " +
              (r.conserved && raw.conserved ? "held" : "VIOLATED") + " every round"};
}

// ---- 8 ---------------------------------------------------------------

Outcome augmentation_suite() {
  const auto failures = oracle::augment_invariant_failures(100);
  std::string detail = std::to_string(failures.size()) + " violations";
  if (!failures.empty()) detail += ", first: " + failures.front();
  return {failures.empty(), detail + " (dihedral closure/involution, mix envelope/identity, "
                                     "occlusion pixel count, kNN expansion vs brute force)"};
}

// ---- 9 ---------------------------------------------------------------

Outcome mc_dropout() {
  double min_mi = 0.0;
  bool zero_ok = true;
  const Shape3 in{3, 3, 5};
  Rng rng(0xC9);
  PatchSet batch;
  batch.window = 3;
  batch.bands = 5;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> s(45);
    for (auto& v : s) v = uniform01(rng);
    batch.push_back(s, 1 + i % 3, {0, i});
  }
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto spec = parse_config("input-5 -> conv3-4 -> dropout-0.5 -> fc-6 -> dropout-0.3 -> softmax-3");
    const Network net(spec, in);
    const auto p = init_params(spec, in, s);
    for (const auto& m : mc_forward(net, p, batch, 16, s)) min_mi = std::min(min_mi, m.mutual_information);
    for (const auto& m : mc_forward(net, p, batch, 1, s)) zero_ok = zero_ok && m.mutual_information == 0.0;
    const auto zero = parse_config("input-5 -> conv3-4 -> dropout-0 -> fc-6 -> softmax-3");
    const Network net0(zero, in);
    for (const auto& m : mc_forward(net0, init_params(zero, in, s), batch, 16, s)) {
      zero_ok = zero_ok && m.mutual_information == 0.0;
    }
  }
  // Trained toy model: two spectral classes, dropout 0.5, 32 passes.
  PatchSet toy;
  toy.window = 1;
  toy.bands = 4;
  for (int i = 0; i < 40; ++i) {
    const int y = 1 + i % 2;
    std::vector<double> s(4);
    for (int b = 0; b < 4; ++b) s[b] = (y == 1 ? 0.2 + 0.1 * b : 0.6 - 0.1 * b) + 0.05 * normal(rng);
    toy.push_back(s, y, {0, i});
  }
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 8;
  tc.seed = 3;
  const TrainedModel m = train_supervised(parse_config("input-4 -> fc-16 -> dropout-0.5 -> softmax-2"), toy, tc);
  const Network net(m.spec, m.input);
  double mean_mi = 0.0;
  for (const auto& r : mc_forward(net, m.params, toy, 32, 5)) {
    mean_mi += r.mutual_information / toy.size();
    min_mi = std::min(min_mi, r.mutual_information);
  }
  return {min_mi >= -1e-12 && zero_ok && mean_mi > 0.0,
          "min MI " + fmt("%.1e", min_mi) + " (>= -1e-12 rounding), rate 0 / T=1 exactly zero: " +
              (zero_ok ? "yes" : "NO") + ", trained toy mean MI at rate 0.5, T=32: " + fmt("%.2e", mean_mi) + " (> 0)"};
}

// ---- 10 --------------------------------------------------------------

int count_kind(const NetworkSpec& s, LayerKind k) {
  int n = 0;
  for (const auto& l : s.layers) n += l.kind == k;
  return n;
}

Outcome grammar() {
  const std::string crnn =
      "input-103 → conv3-32 → conv3-32 → conv3-64 → conv3-64 → recur-256 → recur-512 → fc-64 → "
      "fc-64 → softmax-9";
  const std::string six_pair =
      "CRNN (Street) → DATL ← CRNN (Aerial)\n"
      "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
      "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
      "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
      "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
      "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
      "recur-64 → DATL ← recur-128\n"
      "fully connected-12";
  std::vector<std::string> bad;
  const auto need = [&](bool ok, const char* what) {
    if (!ok) bad.push_back(what);
  };
  const NetworkSpec a = parse_config(crnn);
  const std::string ra = render_config(a);
  need(parse_config(ra) == a && render_config(parse_config(ra)) == ra, "crnn canonical render");
  need(a.input_bands == 103 && count_kind(a, LayerKind::kConv) == 4 &&
           count_kind(a, LayerKind::kMaxPool) == 4 && count_kind(a, LayerKind::kRecurrent) == 2 &&
           count_kind(a, LayerKind::kDense) == 2 && a.num_classes() == 9,
       "crnn layer counts");
  const Network na(a, {16, 16, 103});
  const auto& sh = na.shapes();
  std::vector<int> widths;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].kind != LayerKind::kMaxPool) widths.push_back(sh[i + 1].c);
  }
  need(widths == std::vector<int>{32, 32, 64, 64, 256, 512, 64, 64, 9}, "crnn widths");

  const FannSpec f = parse_fann_config(six_pair, 274, 360);
  const std::string rf = render_fann_config(f);
  const FannSpec f2 = parse_fann_config(rf, 274, 360);
  need(f2.source_branch == f.source_branch && f2.target_branch == f.target_branch &&
           f2.aligned_layer_ids == f.aligned_layer_ids && render_fann_config(f2) == rf,
       "six-pair canonical render");
  need(f.aligned_layer_ids.size() == 6 && f.num_classes() == 12 &&
           count_kind(f.source_branch, LayerKind::kConv) == 5 &&
           count_kind(f.target_branch, LayerKind::kConv) == 5 &&
           count_kind(f.source_branch, LayerKind::kRecurrent) == 1,
       "six-pair layer counts");
  const Network ns(f.source_branch, {8, 8, 274});
  const Network nt(f.target_branch, {8, 8, 360});
  bool w4 = true;
  for (std::size_t p = 0; p < 5; ++p) {
    w4 = w4 && ns.shapes()[f.aligned_layer_ids[p].first + 1].c == 128 &&
         nt.shapes()[f.aligned_layer_ids[p].second + 1].c == 512;
  }
  w4 = w4 && ns.shapes()[f.aligned_layer_ids[5].first + 1].c == 64 &&
       nt.shapes()[f.aligned_layer_ids[5].second + 1].c == 128;
  need(w4, "six-pair widths");
  std::string detail = bad.empty() ? "both configuration tables parse, render canonically and build"
                                   : "failed: ";
  for (const auto& b : bad) detail += b + "; ";
  return {bad.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "DATL oracle equivalence", 10, datl_oracle},
      {2, "gradient checks", 60, gradients},
      {3, "beta calibration", 60, beta_calibration},
      {4, "adaptation lift", 600, adaptation_lift},
      {5, "pseudo-label lift", 600, pseudo_label_lift},
      {6, "probe ordering", 300, probe_ordering},
      {7, "active learning efficiency", 900, al_efficiency},
      {8, "augmentation invariants", 30, augmentation_suite},
      {9, "MC-dropout sanity", 60, mc_dropout},
      {10, "grammar fidelity", 1, grammar},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && dt <= c.limit_s;
    failed += !pass;
    std::printf("%s [%d] %s: %s; %.2fs (limit %.0fs)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), dt, c.limit_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
