#include "hsi/synth.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hsi/rng.hpp"

namespace hsi {

namespace {

constexpr double kPrototypeCeiling = 0.48;

struct Bump {
  double center, width, amplitude;
};

struct Prototype {
  double base = 0.0;
  double scale = 1.0;
  std::vector<Bump> bumps;

  double raw(double wl) const {
    double v = 0.0;
    for (const auto& b : bumps) {
      const double z = (wl - b.center) / b.width;
      v += b.amplitude * std::exp(-0.5 * z * z);
    }
    return v;
  }
  double operator()(double wl) const { return base + scale * raw(wl); }
};

Prototype make_prototype(const SynthConfig& cfg, std::uint64_t seed, int class_id) {
  Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(class_id)));
  const double lo = cfg.source_grid.first_nm;
  const double hi = cfg.source_grid.last_nm;
  const double span = hi - lo;
  Prototype p;
  p.base = uniform(rng, 0.04, 0.12);
  const int n = 2 + static_cast<int>(uniform_index(rng, 3));
  for (int i = 0; i < n; ++i) {
    Bump b;
    b.center = uniform(rng, lo, hi);
    b.width = uniform(rng, 0.06, 0.22) * span;
    b.amplitude = uniform(rng, 0.05, 0.22);
    p.bumps.push_back(b);
  }
  // Keep the peak below the ceiling; measured on a fixed dense grid so the
  // prototype is the same function whichever band grid samples it.
  double peak = 0.0;
  for (int i = 0; i <= 512; ++i) peak = std::max(peak, p.raw(lo + span * i / 512.0));
  if (p.base + peak > kPrototypeCeiling) p.scale = (kPrototypeCeiling - p.base) / peak;
  return p;
}

// Voronoi partition with classes assigned round-robin to the sites.
std::vector<int> region_map(const SynthConfig& cfg, Rng& rng) {
  const int sites = cfg.classes * cfg.regions_per_class;
  const std::size_t plane = static_cast<std::size_t>(cfg.height) * cfg.width;
  if (static_cast<std::size_t>(sites) > plane) {
    throw ArgumentError("image too small for the requested number of regions");
  }
  std::vector<std::size_t> order = permutation(plane, rng);
  std::vector<std::pair<int, int>> site_xy;
  for (int s = 0; s < sites; ++s) {
    site_xy.emplace_back(static_cast<int>(order[s] / cfg.width),
                         static_cast<int>(order[s] % cfg.width));
  }
  std::vector<int> classes(plane);
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      int best = 0;
      long best_d = -1;
      for (int s = 0; s < sites; ++s) {
        const long dr = r - site_xy[s].first;
        const long dc = c - site_xy[s].second;
        const long d = dr * dr + dc * dc;
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = s;
        }
      }
      classes[static_cast<std::size_t>(r) * cfg.width + c] = best % cfg.classes + 1;
    }
  }
  return classes;
}

std::vector<std::string> class_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

double noise_sigma(const SynthConfig& cfg, double signal_mean) {
  if (!cfg.snr_db) return 0.0;
  return signal_mean / std::pow(10.0, *cfg.snr_db / 20.0);
}

}  // namespace

std::vector<double> BandGrid::wavelengths() const {
  std::vector<double> wl(bands);
  for (int b = 0; b < bands; ++b) {
    wl[b] = bands == 1 ? first_nm : first_nm + (last_nm - first_nm) * b / (bands - 1);
  }
  return wl;
}

void SynthConfig::validate() const {
  if (classes < 2) throw ArgumentError("synthetic config needs at least 2 classes");
  if (height < 1 || width < 1) throw ArgumentError("synthetic image size must be positive");
  if (regions_per_class < 1) throw ArgumentError("regions_per_class must be positive");
  for (const auto* g : {&source_grid, &target_grid}) {
    if (g->bands < 1) throw ArgumentError("band grid needs at least one band");
    if (g->bands > 1 && !(g->last_nm > g->first_nm)) {
      throw ArgumentError("band grid must be increasing");
    }
  }
  if (target_grid.first_nm < source_grid.first_nm ||
      target_grid.last_nm > source_grid.last_nm) {
    throw ArgumentError("target band grid lies outside the source wavelength span");
  }
  if (brightness_jitter < 0) throw ArgumentError("brightness_jitter must be >= 0");
  if (shift.mix_strength < 0 || shift.mix_strength >= 1) {
    throw ArgumentError("mix_strength must be in [0, 1)");
  }
  if (shift.dirichlet_alpha <= 0) throw ArgumentError("dirichlet_alpha must be positive");
}

SynthConfig shifted_synth_config() {
  SynthConfig c;
  c.shift.gain = 1.4;
  c.shift.gain_ripple = 0.3;
  c.shift.offset = 0.03;
  c.shift.mix_strength = 0.3;
  return c;
}

std::vector<double> class_prototype(const SynthConfig& config, std::uint64_t seed,
                                    int class_id, const std::vector<double>& wavelengths) {
  const Prototype p = make_prototype(config, seed, class_id);
  std::vector<double> out;
  out.reserve(wavelengths.size());
  for (double wl : wavelengths) out.push_back(p(wl));
  return out;
}

DomainPair synth_domain_pair(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int C = cfg.classes;
  const auto src_wl = cfg.source_grid.wavelengths();
  const auto tgt_wl = cfg.target_grid.wavelengths();
  std::vector<std::vector<double>> src_proto(C + 1), tgt_proto(C + 1);
  for (int c = 1; c <= C; ++c) {
    src_proto[c] = class_prototype(cfg, seed, c, src_wl);
    tgt_proto[c] = class_prototype(cfg, seed, c, tgt_wl);
  }

  Rng shift_rng(mix_seed(seed, 7));
  const double phase = uniform(shift_rng, 0.0, 2.0 * M_PI);
  std::vector<double> gain(tgt_wl.size());
  const double tspan = std::max(cfg.target_grid.last_nm - cfg.target_grid.first_nm, 1.0);
  for (std::size_t b = 0; b < tgt_wl.size(); ++b) {
    gain[b] = cfg.shift.gain +
              cfg.shift.gain_ripple *
                  std::sin(3.0 * M_PI * (tgt_wl[b] - cfg.target_grid.first_nm) / tspan + phase);
  }

  const auto render = [&](Domain domain, std::uint64_t stream) {
    const bool is_target = domain == Domain::kTarget;
    const auto& protos = is_target ? tgt_proto : src_proto;
    const std::size_t bands = is_target ? tgt_wl.size() : src_wl.size();
    Rng map_rng(mix_seed(seed, stream));
    Rng pix_rng(mix_seed(seed, stream + 1));
    std::vector<int> classes = region_map(cfg, map_rng);
    std::vector<float> values(classes.size() * bands);
    std::vector<double> spec(bands);
    for (std::size_t p = 0; p < classes.size(); ++p) {
      const auto& proto = protos[classes[p]];
      spec = proto;
      if (is_target && cfg.shift.mix_strength > 0.0) {
        const auto w = dirichlet(pix_rng, C, cfg.shift.dirichlet_alpha);
        for (std::size_t b = 0; b < bands; ++b) {
          double mix = 0.0;
          for (int k = 0; k < C; ++k) mix += w[k] * protos[k + 1][b];
          spec[b] = (1.0 - cfg.shift.mix_strength) * proto[b] + cfg.shift.mix_strength * mix;
        }
      }
      if (cfg.brightness_jitter > 0.0) {
        const double scale = std::max(0.0, 1.0 + cfg.brightness_jitter * normal(pix_rng));
        for (auto& v : spec) v *= scale;
      }
      if (is_target) {
        for (std::size_t b = 0; b < bands; ++b) spec[b] = gain[b] * spec[b] + cfg.shift.offset;
      }
      double mean = 0.0;
      for (double v : spec) mean += v;
      mean /= static_cast<double>(bands);
      const double sigma = noise_sigma(cfg, mean);
      for (std::size_t b = 0; b < bands; ++b) {
        double v = spec[b];
        if (sigma > 0.0) v += sigma * normal(pix_rng);
        values[p * bands + b] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    return HyperScene{
        HyperCube(cfg.height, cfg.width, static_cast<int>(bands),
                  is_target ? tgt_wl : src_wl, std::move(values), ValueKind::kReflectance),
        LabelMap(cfg.height, cfg.width, std::move(classes), class_names(C))};
  };

  nlohmann::json meta = nlohmann::json::parse(synth_config_to_json(cfg));
  meta["seed"] = seed;
  meta["target_gain_per_band"] = gain;
  return DomainPair(render(Domain::kSource, 100), render(Domain::kTarget, 200), meta.dump());
}

std::string synth_config_to_json(const SynthConfig& c) {
  const auto grid = [](const BandGrid& g) {
    return nlohmann::json{{"first_nm", g.first_nm}, {"last_nm", g.last_nm}, {"bands", g.bands}};
  };
  nlohmann::json j{
      {"classes", c.classes},
      {"source_grid", grid(c.source_grid)},
      {"target_grid", grid(c.target_grid)},
      {"height", c.height},
      {"width", c.width},
      {"snr_db", c.snr_db ? nlohmann::json(*c.snr_db) : nlohmann::json(nullptr)},
      {"brightness_jitter", c.brightness_jitter},
      {"regions_per_class", c.regions_per_class},
      {"shift",
       {{"gain", c.shift.gain},
        {"gain_ripple", c.shift.gain_ripple},
        {"offset", c.shift.offset},
        {"mix_strength", c.shift.mix_strength},
        {"dirichlet_alpha", c.shift.dirichlet_alpha}}}};
  return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base) {
  SynthConfig c = base;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  const auto field = [&](const nlohmann::json& obj, const char* key, auto& dst,
                         const std::string& path) {
    if (!obj.contains(key)) return;
    try {
      obj.at(key).get_to(dst);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path + key + ": wrong type");
    }
  };
  const auto grid = [&](const char* key, BandGrid& g) {
    if (!j.contains(key)) return;
    const auto& o = j.at(key);
    if (!o.is_object()) throw ConfigError(std::string("dataset.synthetic.") + key + ": expected object");
    const std::string path = std::string("dataset.synthetic.") + key + ".";
    field(o, "first_nm", g.first_nm, path);
    field(o, "last_nm", g.last_nm, path);
    field(o, "bands", g.bands, path);
  };
  const std::string p = "dataset.synthetic.";
  field(j, "classes", c.classes, p);
  grid("source_grid", c.source_grid);
  grid("target_grid", c.target_grid);
  field(j, "height", c.height, p);
  field(j, "width", c.width, p);
  if (j.contains("snr_db")) {
    if (j["snr_db"].is_null()) {
      c.snr_db.reset();
    } else if (j["snr_db"].is_number()) {
      c.snr_db = j["snr_db"].get<double>();
    } else {
      throw ConfigError(p + "snr_db: expected number or null");
    }
  }
  field(j, "brightness_jitter", c.brightness_jitter, p);
  field(j, "regions_per_class", c.regions_per_class, p);
  if (j.contains("shift")) {
    const auto& s = j["shift"];
    const std::string sp = p + "shift.";
    field(s, "gain", c.shift.gain, sp);
    field(s, "gain_ripple", c.shift.gain_ripple, sp);
    field(s, "offset", c.shift.offset, sp);
    field(s, "mix_strength", c.shift.mix_strength, sp);
    field(s, "dirichlet_alpha", c.shift.dirichlet_alpha, sp);
  }
  return c;
}

}  // namespace hsi
