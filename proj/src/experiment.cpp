#include "hsi/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "hsi/cube_io.hpp"
#include "hsi/patches.hpp"
#include "hsi/split.hpp"

namespace hsi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& known) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  const std::string where = path + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(where, "expected true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(where, "expected a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.get<std::int64_t>() < 0) fail(where, "must be >= 0");
    }
  } else {
    if (!v.is_number()) fail(where, "expected a number");
  }
  return v.get<T>();
}

std::optional<Range> get_range(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    fail(path + "." + key, "expected [lo, hi]");
  }
  return Range{v[0].get<double>(), v[1].get<double>()};
}

SceneFiles scene_files(const json& j, const std::string& path, const fs::path& base) {
  check_keys(j, path, {"cube", "labels"});
  if (!j.contains("cube")) fail(path + ".cube", "required");
  if (!j.contains("labels")) fail(path + ".labels", "required");
  SceneFiles f;
  f.cube = base / get<std::string>(j, "cube", path, "");
  f.labels = base / get<std::string>(j, "labels", path, "");
  return f;
}

const std::set<std::string> kSynthKeys = {"preset", "classes", "source_grid", "target_grid",
                                          "height", "width", "snr_db", "brightness_jitter",
                                          "regions_per_class", "shift"};

SynthConfig synthetic_from(const json& j) {
  const std::string path = "dataset.synthetic";
  check_keys(j, path, kSynthKeys);
  SynthConfig base;
  const std::string preset = get<std::string>(j, "preset", path, "default");
  if (preset == "shifted") {
    base = shifted_synth_config();
  } else if (preset != "default") {
    fail(path + ".preset", "unknown preset '" + preset + "'");
  }
  json rest = j;
  rest.erase("preset");
  if (rest.contains("shift")) {
    check_keys(rest["shift"], path + ".shift",
               {"gain", "gain_ripple", "offset", "mix_strength", "dirichlet_alpha"});
  }
  for (const char* g : {"source_grid", "target_grid"}) {
    if (rest.contains(g)) check_keys(rest[g], path + "." + g, {"first_nm", "last_nm", "bands"});
  }
  SynthConfig c = synth_config_from_json(rest.dump(), base);
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    fail(path, e.what());
  }
  return c;
}

json range_json(const std::optional<Range>& r) {
  return r ? json::array({r->first, r->second}) : json(nullptr);
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

Summary summary_percent(const std::vector<double>& fractions) {
  std::vector<double> pct;
  for (double f : fractions) pct.push_back(100.0 * f);
  return summarize(pct);
}

json summary_json(const std::vector<double>& fractions) {
  if (fractions.empty()) return nullptr;
  const Summary s = summary_percent(fractions);
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}, {"formatted", latex_summary(s)}};
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& taken) {
  std::vector<char> used(n, 0);
  for (std::size_t i : taken) used[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) out.push_back(i);
  }
  return out;
}

PatchSet unlabeled_copy(PatchSet p) {
  std::fill(p.labels.begin(), p.labels.end(), 0);
  return p;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json scene_summary(const HyperScene& s) {
  json counts = json::object();
  std::vector<std::size_t> n(s.labels.num_classes() + 1, 0);
  for (int c : s.labels.classes()) ++n[c];
  for (int c = 1; c <= s.labels.num_classes(); ++c) counts[s.labels.name_of(c)] = n[c];
  const auto& wl = s.cube.wavelengths_nm();
  return {{"height", s.cube.height()},
          {"width", s.cube.width()},
          {"bands", s.cube.bands()},
          {"kind", to_string(s.cube.kind())},
          {"first_nm", wl.front()},
          {"last_nm", wl.back()},
          {"labeled", s.labels.labeled_count()},
          {"class_counts", counts}};
}

struct SeedOutcome {
  json record;
  double oa = 0.0;
};

// Source-scene split shared by the classifier modes.
struct SourceSplit {
  PatchSet train, test, rest;
};

SourceSplit source_split(const HyperScene& scene, int window, int per_class, std::uint64_t seed) {
  const SplitSpec sp = split_labels(scene.labels, per_class, seed);
  SourceSplit s;
  s.train = extract_patches_at(scene.cube, scene.labels, window, sp.train_indices);
  s.test = extract_patches_at(scene.cube, scene.labels, window, sp.test_indices);
  const auto rest = complement(scene.labels.classes().size(), sp.train_indices);
  s.rest = unlabeled_copy(extract_patches_at(scene.cube, scene.labels, window, rest));
  return s;
}

json eval_json(const Evaluation& ev) {
  return {{"oa", ev.oa}, {"per_class", ev.per_class}};
}

SeedOutcome run_classifier(const ExperimentConfig& cfg, const LoadedScenes& sc, TrainConfig tc,
                           const fs::path& dir, std::uint64_t seed) {
  const NetworkSpec spec = parse_config(cfg.model.network);
  SourceSplit s = source_split(sc.source, cfg.dataset.window, cfg.split.per_class, seed);
  if (cfg.augment) {
    AugmentPlan plan = *cfg.augment;
    plan.seed = mix_seed(plan.seed, seed);
    s.train = apply_plan(s.train, plan, &s.rest, sc.source.cube.kind() == ValueKind::kReflectance);
  }
  TrainedModel model;
  switch (cfg.mode) {
    case TrainerMode::kSupervised:
      model = train_supervised(spec, s.train, tc);
      break;
    case TrainerMode::kSemisupRecon:
      model = train_semisup_recon(spec, s.train, s.rest, tc);
      break;
    case TrainerMode::kPlssdl: {
      const PatchSet all = unlabeled_copy(extract_patches(sc.source.cube, sc.source.labels,
                                                          cfg.dataset.window, PixelSelection::kAll));
      model = finetune(pretrain_pseudo(spec, all, tc), s.train, tc);
      break;
    }
    default:
      throw ArgumentError("not a classifier mode");
  }
  const Evaluation ev = evaluate(model, s.test);
  save_model(model, dir / "model.json", {{"mode", to_string(cfg.mode)}});
  write_history_csv(model.history, dir / "history.csv");
  json rec = eval_json(ev);
  rec["train_samples"] = s.train.size();
  rec["test_samples"] = s.test.size();
  rec["checkpoint"] = seed_dir_name(seed) + "/model.json";
  rec["history"] = seed_dir_name(seed) + "/history.csv";
  return {rec, ev.oa};
}

SeedOutcome run_fann_seed(const ExperimentConfig& cfg, const LoadedScenes& sc, TrainConfig tc,
                          const fs::path& dir, std::uint64_t seed) {
  if (!sc.target) throw ArgumentError("fann mode needs a target scene");
  const int win = cfg.dataset.window;
  const FannSpec spec =
      parse_fann_config(cfg.model.fann, sc.source.cube.bands(), sc.target->cube.bands());
  const SplitSpec ss = split_labels(sc.source.labels, cfg.split.per_class, seed);
  const SplitSpec ts = split_labels(sc.target->labels, cfg.split.target_per_class, seed + 100);
  PatchSet src = extract_patches_at(sc.source.cube, sc.source.labels, win, ss.train_indices,
                                    Domain::kSource);
  const PatchSet tgt = extract_patches_at(sc.target->cube, sc.target->labels, win,
                                          ts.train_indices, Domain::kTarget);
  const PatchSet test = extract_patches_at(sc.target->cube, sc.target->labels, win,
                                           ts.test_indices, Domain::kTarget);
  if (cfg.augment) {
    AugmentPlan plan = *cfg.augment;
    plan.seed = mix_seed(plan.seed, seed);
    plan.knn_k = 0;
    src = apply_plan(src, plan, nullptr, sc.source.cube.kind() == ValueKind::kReflectance);
  }
  const PatchSet unl = unlabeled_copy(test);
  const FannModel m = train_fann(spec, src, tgt, tc, &unl);
  const Evaluation ev = evaluate_fann(m, test, Domain::kTarget);
  const FannModel so = train_source_only(spec, src, tc);
  const Evaluation base = evaluate_fann(so, test, Domain::kSource);

  save_fann(m, dir / "model.json");
  write_history_csv(m.history, dir / "history.csv");
  json rec = eval_json(ev);
  rec["baseline_oa"] = base.oa;
  rec["betas"] = m.betas;
  rec["train_samples"] = src.size() + tgt.size();
  rec["test_samples"] = test.size();
  if (cfg.report.probes) {
    json probes = json::object();
    for (std::size_t p = 0; p < m.num_pairs(); ++p) {
      probes["FA-" + std::to_string(p + 1)] = layer_probe(m, static_cast<int>(p), src, tgt, test);
    }
    probes["concatenated"] = layer_probe(m, kConcatenated, src, tgt, test);
    rec["probes"] = probes;
  }
  rec["checkpoint"] = seed_dir_name(seed) + "/model.json";
  rec["history"] = seed_dir_name(seed) + "/history.csv";
  return {rec, ev.oa};
}

SeedOutcome run_active_seed(const ExperimentConfig& cfg, const LoadedScenes& sc, TrainConfig tc,
                            const fs::path& dir, std::uint64_t seed) {
  const NetworkSpec spec = parse_config(cfg.model.network);
  const SplitSpec sp = split_labels(sc.source.labels, cfg.split.per_class, seed);
  const int win = cfg.dataset.window;
  const PatchSet data = extract_patches_at(sc.source.cube, sc.source.labels, win, sp.train_indices);
  const PatchSet test = extract_patches_at(sc.source.cube, sc.source.labels, win, sp.test_indices);
  Rng rng(mix_seed(seed, 11));
  std::map<int, int> taken;
  std::vector<std::size_t> initial;
  for (std::size_t i : permutation(data.size(), rng)) {
    if (taken[data.labels[i]]++ < cfg.active.initial_per_class) initial.push_back(i);
  }
  LoopConfig lc;
  lc.train = tc;
  lc.query.mc_passes = cfg.active.mc_passes;
  lc.query.density_k = cfg.active.density_k;
  lc.query.seed = mix_seed(seed, 12);
  lc.warm_start = cfg.active.warm_start;
  lc.plateau_rounds = cfg.active.plateau_rounds;
  lc.plateau_tol = cfg.active.plateau_tol;
  const ALState out = run_loop(make_state(data.size(), initial, cfg.active.budget, cfg.active.step),
                               cfg.active.strategy, spec, data, test, lc);
  write_curve_csv(out.history, dir / "curve.csv");
  json curve = json::array();
  for (const auto& p : out.history) curve.push_back({{"labels_used", p.labels_used}, {"oa", p.oa}});
  const auto& last = out.history.back();
  json rec{{"oa", last.oa},
           {"per_class", last.per_class},
           {"labels_used", last.labels_used},
           {"strategy", to_string(cfg.active.strategy)},
           {"curve", curve},
           {"curve_csv", seed_dir_name(seed) + "/curve.csv"}};
  return {rec, last.oa};
}

std::string percent(double fraction) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << 100.0 * fraction;
  return o.str();
}

}  // namespace

TrainerMode parse_mode(const std::string& name) {
  if (name == "supervised") return TrainerMode::kSupervised;
  if (name == "semisup_recon") return TrainerMode::kSemisupRecon;
  if (name == "plssdl") return TrainerMode::kPlssdl;
  if (name == "fann") return TrainerMode::kFann;
  if (name == "active") return TrainerMode::kActive;
  throw ArgumentError("unknown trainer mode '" + name + "'");
}

const char* to_string(TrainerMode mode) {
  switch (mode) {
    case TrainerMode::kSupervised: return "supervised";
    case TrainerMode::kSemisupRecon: return "semisup_recon";
    case TrainerMode::kPlssdl: return "plssdl";
    case TrainerMode::kFann: return "fann";
    case TrainerMode::kActive: return "active";
  }
  return "?";
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "", {"dataset", "split", "augment", "model", "trainer", "active", "report"});
  for (const char* key : {"dataset", "model", "trainer"}) {
    if (!j.contains(key)) fail(key, "required");
  }
  ExperimentConfig c;

  const json& d = j.at("dataset");
  check_keys(d, "dataset", {"synthetic", "source", "target", "window"});
  if (d.contains("synthetic") == d.contains("source")) {
    fail("dataset", "give exactly one of 'synthetic' and 'source'");
  }
  if (d.contains("synthetic")) {
    if (d.contains("target")) fail("dataset.target", "not allowed with a synthetic dataset");
    c.dataset.synthetic = synthetic_from(d.at("synthetic"));
  } else {
    c.dataset.source = scene_files(d.at("source"), "dataset.source", base_dir);
    if (d.contains("target")) c.dataset.target = scene_files(d.at("target"), "dataset.target", base_dir);
  }
  c.dataset.window = get(d, "window", "dataset", 1);

  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, "split", {"per_class", "target_per_class"});
    c.split.per_class = get(s, "per_class", "split", c.split.per_class);
    c.split.target_per_class = get(s, "target_per_class", "split", c.split.target_per_class);
  }

  if (j.contains("augment") && !j.at("augment").is_null()) {
    const json& a = j.at("augment");
    check_keys(a, "augment", {"dihedral", "scale_range", "mix_weight_range",
                              "occlusion_fraction_range", "block_window", "knn_k", "knn_radius",
                              "seed"});
    AugmentPlan p;
    p.dihedral = get(a, "dihedral", "augment", p.dihedral);
    p.scale_range = get_range(a, "scale_range", "augment");
    p.mix_weight_range = get_range(a, "mix_weight_range", "augment");
    p.occlusion_fraction_range = get_range(a, "occlusion_fraction_range", "augment");
    p.block_window = get(a, "block_window", "augment", p.block_window);
    p.knn_k = get(a, "knn_k", "augment", p.knn_k);
    p.knn_radius = get(a, "knn_radius", "augment", p.knn_radius);
    p.seed = get(a, "seed", "augment", p.seed);
    c.augment = p;
  }

  const json& m = j.at("model");
  check_keys(m, "model", {"network", "fann"});
  c.model.network = get<std::string>(m, "network", "model", "");
  c.model.fann = get<std::string>(m, "fann", "model", "");

  const json& t = j.at("trainer");
  if (!t.is_object()) fail("trainer", "expected an object");
  if (!t.contains("mode")) fail("trainer.mode", "required");
  if (!t.at("mode").is_string()) fail("trainer.mode", "expected one mode name");
  try {
    c.mode = parse_mode(t.at("mode").get<std::string>());
  } catch (const ArgumentError& e) {
    fail("trainer.mode", e.what());
  }
  json rest = t;
  rest.erase("mode");
  c.train = TrainConfig::from_json(rest);

  if (j.contains("active")) {
    const json& a = j.at("active");
    check_keys(a, "active", {"strategy", "initial_per_class", "budget", "step", "mc_passes",
                             "density_k", "warm_start", "plateau_rounds", "plateau_tol"});
    if (a.contains("strategy")) {
      try {
        c.active.strategy = parse_strategy(get<std::string>(a, "strategy", "active", ""));
      } catch (const ArgumentError& e) {
        fail("active.strategy", e.what());
      }
    }
    c.active.initial_per_class = get(a, "initial_per_class", "active", c.active.initial_per_class);
    c.active.budget = get(a, "budget", "active", c.active.budget);
    c.active.step = get(a, "step", "active", c.active.step);
    c.active.mc_passes = get(a, "mc_passes", "active", c.active.mc_passes);
    c.active.density_k = get(a, "density_k", "active", c.active.density_k);
    c.active.warm_start = get(a, "warm_start", "active", c.active.warm_start);
    c.active.plateau_rounds = get(a, "plateau_rounds", "active", c.active.plateau_rounds);
    c.active.plateau_tol = get(a, "plateau_tol", "active", c.active.plateau_tol);
  }

  if (j.contains("report")) {
    const json& r = j.at("report");
    check_keys(r, "report", {"out_dir", "seeds", "probes"});
    c.report.out_dir = get<std::string>(r, "out_dir", "report", c.report.out_dir.string());
    if (r.contains("seeds")) {
      const json& s = r.at("seeds");
      if (!s.is_array()) fail("report.seeds", "expected an array of integers");
      c.report.seeds.clear();
      for (const auto& v : s) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
          fail("report.seeds", "expected non-negative integers");
        }
        c.report.seeds.push_back(v.get<std::uint64_t>());
      }
    }
    c.report.probes = get(r, "probes", "report", c.report.probes);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (dataset.synthetic.has_value() == dataset.source.has_value()) {
    fail("dataset", "give exactly one of 'synthetic' and 'source'");
  }
  for (const auto* files : {&dataset.source, &dataset.target}) {
    if (!*files) continue;
    const std::string which = files == &dataset.source ? "dataset.source" : "dataset.target";
    if (!fs::exists((*files)->cube)) fail(which + ".cube", "no such file " + (*files)->cube.string());
    if (!fs::exists((*files)->labels)) {
      fail(which + ".labels", "no such file " + (*files)->labels.string());
    }
  }
  if (dataset.window < 1 || dataset.window % 2 == 0) fail("dataset.window", "must be odd and >= 1");
  if (split.per_class < 1) fail("split.per_class", "must be >= 1");
  if (split.target_per_class < 1) fail("split.target_per_class", "must be >= 1");
  if (augment) {
    try {
      augment->validate();
    } catch (const ArgumentError& e) {
      throw ConfigError("augment." + std::string(e.what()));
    }
  }
  if (mode == TrainerMode::kFann) {
    if (model.fann.empty()) fail("model.fann", "required for mode fann");
    if (dataset.source && !dataset.target) fail("dataset.target", "required for mode fann");
    try {
      parse_fann_config(model.fann, 1, 1);
    } catch (const Error& e) {
      fail("model.fann", e.what());
    }
  } else {
    if (model.network.empty()) fail("model.network", "required for mode " + std::string(to_string(mode)));
    try {
      parse_config(model.network);
    } catch (const Error& e) {
      fail("model.network", e.what());
    }
  }
  if (mode == TrainerMode::kActive) {
    if (active.initial_per_class < 1) fail("active.initial_per_class", "must be >= 1");
    if (active.step < 1) fail("active.step", "must be >= 1");
    if (active.budget < 0) fail("active.budget", "must be >= 0");
    if (active.budget > 0 && active.budget < active.step) {
      fail("active.budget", "smaller than active.step");
    }
    if (active.mc_passes < 1) fail("active.mc_passes", "must be >= 1");
    if (active.density_k < 1) fail("active.density_k", "must be >= 1");
    if (active.plateau_rounds < 0) fail("active.plateau_rounds", "must be >= 0");
  }
  if (report.seeds.empty()) fail("report.seeds", "must not be empty");
  if (std::set<std::uint64_t>(report.seeds.begin(), report.seeds.end()).size() != report.seeds.size()) {
    fail("report.seeds", "seeds must be distinct");
  }
  if (report.out_dir.empty()) fail("report.out_dir", "must not be empty");
  train.validate();
}

json ExperimentConfig::to_json() const {
  json d{{"window", dataset.window}};
  if (dataset.synthetic) d["synthetic"] = json::parse(synth_config_to_json(*dataset.synthetic));
  const auto files = [](const SceneFiles& f) {
    return json{{"cube", f.cube.string()}, {"labels", f.labels.string()}};
  };
  if (dataset.source) d["source"] = files(*dataset.source);
  if (dataset.target) d["target"] = files(*dataset.target);
  json t = train.to_json();
  t["mode"] = to_string(mode);
  json j{{"dataset", d},
         {"split", {{"per_class", split.per_class}, {"target_per_class", split.target_per_class}}},
         {"model", {{"network", model.network}, {"fann", model.fann}}},
         {"trainer", t},
         {"active",
          {{"strategy", to_string(active.strategy)},
           {"initial_per_class", active.initial_per_class},
           {"budget", active.budget},
           {"step", active.step},
           {"mc_passes", active.mc_passes},
           {"density_k", active.density_k},
           {"warm_start", active.warm_start},
           {"plateau_rounds", active.plateau_rounds},
           {"plateau_tol", active.plateau_tol}}},
         {"report",
          {{"out_dir", report.out_dir.string()}, {"seeds", report.seeds}, {"probes", report.probes}}}};
  if (augment) {
    j["augment"] = {{"dihedral", augment->dihedral},
                    {"scale_range", range_json(augment->scale_range)},
                    {"mix_weight_range", range_json(augment->mix_weight_range)},
                    {"occlusion_fraction_range", range_json(augment->occlusion_fraction_range)},
                    {"block_window", augment->block_window},
                    {"knn_k", augment->knn_k},
                    {"knn_radius", augment->knn_radius},
                    {"seed", augment->seed}};
  }
  return j;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* out = std::getenv("HSI_OUT_DIR"); out && *out) cfg.report.out_dir = out;
  if (const char* seed = std::getenv("HSI_SEED"); seed && *seed) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(seed, &end, 10);
    if (*end != '\0' || seed[0] == '-') fail("HSI_SEED", "expected a non-negative integer");
    cfg.report.seeds = {v};
  }
}

LoadedScenes load_scenes(const DatasetBlock& dataset, std::uint64_t seed) {
  if (dataset.synthetic) {
    DomainPair dp = synth_domain_pair(*dataset.synthetic, seed);
    return {std::move(dp.source), std::move(dp.target), dp.shift_metadata};
  }
  if (!dataset.source) throw ArgumentError("dataset has no source scene");
  const auto scene = [](const SceneFiles& f) {
    HyperCube cube = load_cube(f.cube);
    LabelMap labels = load_labels(f.labels, names_path_for(f.labels), cube.height(), cube.width());
    check_paired(cube, labels);
    return HyperScene{std::move(cube), std::move(labels)};
  };
  LoadedScenes out{scene(*dataset.source), std::nullopt, ""};
  if (dataset.target) {
    out.target = scene(*dataset.target);
    if (out.target->labels.class_names() != out.source.labels.class_names()) {
      throw PairingError("source and target scenes use different class names");
    }
  }
  return out;
}

DomainPair gen_synth(const SynthConfig& config, std::uint64_t seed, const fs::path& out_dir) {
  DomainPair dp = synth_domain_pair(config, seed);
  fs::create_directories(out_dir);
  for (const auto* scene : {&dp.source, &dp.target}) {
    const std::string name = scene == &dp.source ? "source" : "target";
    write_cube(scene->cube, out_dir / (name + ".hdr"));
    const fs::path labels = out_dir / (name + "_labels.csv");
    write_labels(scene->labels, labels, names_path_for(labels));
  }
  std::ofstream(out_dir / "shift.json") << json::parse(dp.shift_metadata).dump(2) << "\n";
  return dp;
}

json ingest(const DatasetBlock& dataset, std::uint64_t seed, const fs::path& out_dir) {
  const LoadedScenes sc = load_scenes(dataset, seed);
  json j{{"source", scene_summary(sc.source)}};
  if (sc.target) j["target"] = scene_summary(*sc.target);
  if (!sc.shift_metadata.empty()) j["shift"] = json::parse(sc.shift_metadata);
  fs::create_directories(out_dir);
  write_json(j, out_dir / "dataset.json");
  return j;
}

std::string latex_summary(const Summary& s) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << "$" << s.mean;
  if (s.n > 1) o << " \\pm " << s.std;
  o << "$";
  return o.str();
}

json run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.report.out_dir;
  fs::create_directories(out);
  write_json(cfg.to_json(), out / "config.json");

  json runs = json::array();
  std::vector<double> oa, baseline;
  std::map<std::string, std::vector<double>> probes;
  std::vector<std::string> probe_order;
  for (std::uint64_t seed : cfg.report.seeds) {
    const fs::path dir = out / seed_dir_name(seed);
    json rec;
    try {
      fs::create_directories(dir);
      const LoadedScenes sc = load_scenes(cfg.dataset, seed);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      SeedOutcome o;
      switch (cfg.mode) {
        case TrainerMode::kFann: o = run_fann_seed(cfg, sc, tc, dir, seed); break;
        case TrainerMode::kActive: o = run_active_seed(cfg, sc, tc, dir, seed); break;
        default: o = run_classifier(cfg, sc, tc, dir, seed); break;
      }
      rec = std::move(o.record);
      rec["status"] = "ok";
      oa.push_back(o.oa);
      if (rec.contains("baseline_oa")) baseline.push_back(rec["baseline_oa"].get<double>());
      if (rec.contains("probes")) {
        for (const auto& [name, v] : rec["probes"].items()) {
          if (!probes.count(name)) probe_order.push_back(name);
          probes[name].push_back(v.get<double>());
        }
      }
    } catch (const Error& e) {
      rec = {{"status", "failed"}, {"error", e.what()}};
    }
    rec["seed"] = seed;
    runs.push_back(rec);
  }

  json metrics{{"mode", to_string(cfg.mode)},
               {"seeds", cfg.report.seeds},
               {"succeeded", oa.size()},
               {"runs", runs},
               {"oa", summary_json(oa)}};
  if (cfg.mode == TrainerMode::kFann) metrics["baseline_oa"] = summary_json(baseline);
  if (!probe_order.empty()) {
    json p = json::array();
    for (const auto& name : probe_order) {
      json entry = summary_json(probes[name]);
      entry["layer"] = name;
      p.push_back(entry);
    }
    metrics["probes"] = p;
  }
  write_json(metrics, out / "metrics.json");
  if (oa.empty()) {
    std::string why = runs.empty() ? "" : runs[0]["error"].get<std::string>();
    throw TrainingError("every seed failed; first error: " + why);
  }
  return metrics;
}

std::size_t export_features(const fs::path& checkpoint, const DatasetBlock& dataset,
                            std::uint64_t seed, const std::string& layer,
                            const fs::path& out_csv) {
  std::ifstream in(checkpoint);
  if (!in) throw ArgumentError("cannot open checkpoint " + checkpoint.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const LoadedScenes sc = load_scenes(dataset, seed);
  const int win = dataset.window;

  struct Block {
    Matrix features;
    std::vector<int> labels;
    Domain domain;
  };
  std::vector<Block> blocks;
  const auto patches_of = [&](const HyperScene& s, Domain d) {
    return extract_patches(s.cube, s.labels, win, PixelSelection::kLabeled, d);
  };

  if (meta.value("kind", "") == "fann") {
    const FannModel m = load_fann(checkpoint);
    int pair = 0;
    const bool raw = layer == "input";
    if (!raw) {
      if (layer == "concatenated") {
        pair = kConcatenated;
      } else if (layer.rfind("FA-", 0) == 0) {
        try {
          pair = std::stoi(layer.substr(3)) - 1;
        } catch (const std::exception&) {
          throw ArgumentError("unknown layer '" + layer + "'");
        }
        if (pair < 0 || pair >= static_cast<int>(m.num_pairs())) {
          throw ArgumentError("unknown layer '" + layer + "'");
        }
      } else {
        throw ArgumentError("unknown layer '" + layer + "' (use input, FA-k or concatenated)");
      }
    }
    if (!sc.target) throw ArgumentError("a FANN export needs a target scene");
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      const PatchSet p = patches_of(d == Domain::kSource ? sc.source : *sc.target, d);
      blocks.push_back({raw ? flatten(p) : fann_features(m, p, d, pair), p.labels, d});
    }
  } else {
    const TrainedModel m = load_model(checkpoint);
    const Network net(m.spec, m.input);
    const int tap = find_tap(m.spec, layer);
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      if (d == Domain::kTarget && (!sc.target || sc.target->cube.bands() != m.input.c)) continue;
      const PatchSet p = patches_of(d == Domain::kSource ? sc.source : *sc.target, d);
      if (patch_shape(p) != m.input) {
        throw ShapeError("dataset patches " + to_string(patch_shape(p)) +
                         " do not match the checkpoint input " + to_string(m.input));
      }
      blocks.push_back({features_at(net, m.params, p, tap), p.labels, d});
    }
  }
  const std::size_t dim = blocks.front().features.cols;
  for (const auto& b : blocks) {
    if (b.features.cols != dim) throw ShapeError("domains export features of different widths");
  }

  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  std::ofstream out(out_csv);
  if (!out) throw ArgumentError("cannot write " + out_csv.string());
  out << "label,domain";
  for (std::size_t k = 1; k <= dim; ++k) out << ",f" << k;
  out << "\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.features.rows; ++i, ++rows) {
      out << b.labels[i] << "," << to_string(b.domain);
      for (double v : b.features.row(i)) out << "," << v;
      out << "\n";
    }
  }
  return rows;
}

std::string render_report(const fs::path& run_dir) {
  const fs::path metrics_path = run_dir / "metrics.json";
  if (!fs::exists(metrics_path)) throw ReportError("missing artifacts: " + metrics_path.string());
  json m;
  try {
    std::ifstream in(metrics_path);
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ReportError(std::string("metrics.json: ") + e.what());
  }
  for (const char* key : {"mode", "runs", "oa"}) {
    if (!m.contains(key)) throw ReportError(std::string("metrics.json lacks '") + key + "'");
  }
  std::vector<std::string> gaps;
  for (const auto& r : m["runs"]) {
    if (r.value("status", "") != "ok") continue;
    for (const char* key : {"checkpoint", "history", "curve_csv"}) {
      if (!r.contains(key)) continue;
      const fs::path p = run_dir / r[key].get<std::string>();
      if (!fs::exists(p)) gaps.push_back(p.string());
    }
  }
  if (!gaps.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& g : gaps) msg += " " + g;
    throw ReportError(msg);
  }

  const std::string mode = m["mode"].get<std::string>();
  std::ostringstream md, csv;
  csv << "table,row,column,value\n";
  md << "# Run report\n\nMode: " << mode << ", " << m["runs"].size() << " seed(s), "
     << m.value("succeeded", 0) << " succeeded.\n\n";

  md << "## Overall accuracy\n\n| Method | OA (%) |\n|---|---|\n";
  const auto method_row = [&](const std::string& name, const json& s) {
    const std::string f = s.is_null() ? "n/a" : s["formatted"].get<std::string>();
    md << "| " << name << " | " << f << " |\n";
    csv << "oa," << name << ",formatted,\"" << f << "\"\n";
  };
  method_row(mode, m["oa"]);
  if (m.contains("baseline_oa")) method_row("source only", m["baseline_oa"]);

  md << "\n## Per-seed results\n\n| Seed | Status | OA (%) |\n|---|---|---|\n";
  for (const auto& r : m["runs"]) {
    const bool ok = r.value("status", "") == "ok";
    const std::string seed = std::to_string(r["seed"].get<std::uint64_t>());
    md << "| " << seed << " | " << (ok ? "ok" : "failed: " + r.value("error", "")) << " | "
       << (ok ? percent(r["oa"].get<double>()) : "") << " |\n";
    if (ok) csv << "seed," << seed << ",oa," << r["oa"].get<double>() << "\n";
  }

  if (m.contains("probes")) {
    md << "\n## Layer probes\n\n| |";
    std::string rule = "|---|";
    for (const auto& p : m["probes"]) {
      std::string name = p["layer"].get<std::string>();
      if (name == "concatenated") name = "Concatenated";
      md << " " << name << " |";
      rule += "---|";
    }
    md << "\n" << rule << "\n| OA (%) |";
    for (const auto& p : m["probes"]) {
      md << " " << p["formatted"].get<std::string>() << " |";
      csv << "probe," << p["layer"].get<std::string>() << ",formatted,\""
          << p["formatted"].get<std::string>() << "\"\n";
    }
    md << "\n";
  }

  bool curves = false;
  for (const auto& r : m["runs"]) {
    if (!r.contains("curve")) continue;
    if (!curves) {
      md << "\n## Learning curves\n\n| Seed | Labels | OA (%) |\n|---|---|---|\n";
      curves = true;
    }
    const std::string seed = std::to_string(r["seed"].get<std::uint64_t>());
    for (const auto& p : r["curve"]) {
      md << "| " << seed << " | " << p["labels_used"].get<std::size_t>() << " | "
         << percent(p["oa"].get<double>()) << " |\n";
      csv << "curve," << seed << "," << p["labels_used"].get<std::size_t>() << ","
          << p["oa"].get<double>() << "\n";
    }
  }

  std::ofstream(run_dir / "report.md") << md.str();
  std::ofstream(run_dir / "report.csv") << csv.str();
  return md.str();
}

}  // namespace hsi
