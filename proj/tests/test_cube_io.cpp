#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hsi/cube_io.hpp"
#include "hsi/patches.hpp"
#include "hsi/split.hpp"
#include "hsi/synth.hpp"

namespace fs = std::filesystem;
using namespace hsi;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hsi_test_cube_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_raw(const fs::path& p, const std::vector<float>& values) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_header(const fs::path& p, int h, int w, int b, const std::string& wavelengths,
                  const std::string& payload) {
  std::ofstream out(p);
  out << "# test cube\nheight=" << h << "\nwidth=" << w << "\nbands=" << b
      << "\nkind=reflectance\npayload=" << payload << "\nwavelengths=" << wavelengths << "\n";
}

HyperCube ramp_cube(int h, int w, int b) {
  std::vector<double> wl(b);
  std::vector<float> v(static_cast<std::size_t>(h) * w * b);
  for (int k = 0; k < b; ++k) wl[k] = 400.0 + 10.0 * k;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i % 97) / 100.0);
  return HyperCube(h, w, b, wl, v, ValueKind::kReflectance);
}

std::vector<double> class_mean(const HyperScene& s, int c) {
  std::vector<double> m(s.cube.bands(), 0.0);
  int n = 0;
  for (int r = 0; r < s.cube.height(); ++r) {
    for (int q = 0; q < s.cube.width(); ++q) {
      if (s.labels.at(r, q) != c) continue;
      ++n;
      for (int k = 0; k < s.cube.bands(); ++k) m[k] += s.cube.at(r, q, k);
    }
  }
  for (auto& v : m) v /= n;
  return m;
}

double spectral_angle(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return std::acos(std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0));
}

}  // namespace

TEST_CASE("load_cube reads the smallest valid cube") {
  const auto dir = scratch_dir("small");
  // Band-sequential: band 0 plane, band 1 plane, band 2 plane.
  write_raw(dir / "c.bsq", {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f, 1.0f, 0.0f, 0.25f});
  write_header(dir / "c.hdr", 2, 2, 3, "450,550,650", "c.bsq");
  const auto cube = load_cube(dir / "c.hdr");
  CHECK(cube.height() == 2);
  CHECK(cube.width() == 2);
  CHECK(cube.bands() == 3);
  CHECK(cube.at(0, 1, 0) == doctest::Approx(0.2));
  CHECK(cube.at(1, 1, 2) == doctest::Approx(0.25));
  CHECK(cube.at(1, 0, 1) == doctest::Approx(0.7));
}

TEST_CASE("load_cube keeps a 103-band wavelength list") {
  const auto dir = scratch_dir("pavia");
  std::string wl;
  for (int k = 0; k < 103; ++k) {
    if (k) wl += ",";
    wl += std::to_string(430.0 + k * (860.0 - 430.0) / 102.0);
  }
  write_raw(dir / "p.bsq", std::vector<float>(103, 0.5f));
  write_header(dir / "p.hdr", 1, 1, 103, wl, "p.bsq");
  const auto cube = load_cube(dir / "p.hdr");
  CHECK(cube.wavelengths_nm().size() == 103);
  CHECK(cube.wavelengths_nm().front() == doctest::Approx(430.0));
  CHECK(cube.wavelengths_nm().back() == doctest::Approx(860.0));
}

TEST_CASE("load_cube rejects broken payloads") {
  const auto dir = scratch_dir("broken");
  write_header(dir / "missing.hdr", 2, 2, 3, "450,550,650", "nothere.bsq");
  CHECK_THROWS_AS(load_cube(dir / "missing.hdr"), IngestionError);

  write_raw(dir / "short.bsq", std::vector<float>(11, 0.5f));
  write_header(dir / "short.hdr", 2, 2, 3, "450,550,650", "short.bsq");
  CHECK_THROWS_AS(load_cube(dir / "short.hdr"), FormatError);

  std::vector<float> v(12, 0.5f);
  v[5] = std::nanf("");
  write_raw(dir / "nan.bsq", v);
  write_header(dir / "nan.hdr", 2, 2, 3, "450,550,650", "nan.bsq");
  CHECK_THROWS_AS(load_cube(dir / "nan.hdr"), DataError);

  write_raw(dir / "wl.bsq", std::vector<float>(12, 0.5f));
  write_header(dir / "wl.hdr", 2, 2, 3, "450,650,550", "wl.bsq");
  CHECK_THROWS_AS(load_cube(dir / "wl.hdr"), FormatError);
}

TEST_CASE("HyperCube enforces value ranges") {
  CHECK_THROWS_AS(HyperCube(1, 1, 1, {500}, {1.5f}, ValueKind::kReflectance), DataError);
  CHECK_NOTHROW(HyperCube(1, 1, 1, {500}, {1.5f}, ValueKind::kRadiance));
  CHECK_THROWS_AS(HyperCube(1, 1, 1, {500}, {-0.1f}, ValueKind::kRadiance), DataError);
  CHECK_THROWS_AS(HyperCube(1, 1, 2, {500}, {0.1f, 0.2f}, ValueKind::kRadiance), FormatError);
}

TEST_CASE("write_cube after load_cube reproduces the payload bytes") {
  const auto dir = scratch_dir("roundtrip");
  write_cube(ramp_cube(3, 4, 5), dir / "a.hdr");
  const auto first = read_bytes(dir / "a.bsq");
  write_cube(load_cube(dir / "a.hdr"), dir / "b.hdr");
  CHECK(read_bytes(dir / "b.bsq") == first);
  CHECK(load_cube(dir / "b.hdr").wavelengths_nm() == load_cube(dir / "a.hdr").wavelengths_nm());
}

TEST_CASE("labels and splits round-trip through files") {
  const auto dir = scratch_dir("labels");
  LabelMap labels(2, 3, {1, 0, 2, 2, 1, 0}, {"reed", "grass"});
  write_labels(labels, dir / "l.csv", names_path_for(dir / "l.csv"));
  const auto back = load_labels(dir / "l.csv", names_path_for(dir / "l.csv"), 2, 3);
  CHECK(back.classes() == labels.classes());
  CHECK(back.class_names() == labels.class_names());

  SplitSpec s{1, 9, {0, 2}, {3, 4}};
  write_split(s, dir / "s.json");
  const auto t = load_split(dir / "s.json");
  CHECK(t.train_indices == s.train_indices);
  CHECK(t.test_indices == s.test_indices);
  CHECK(t.seed == 9);
}

TEST_CASE("extract_patches window 1 yields bare spectra") {
  const auto cube = ramp_cube(3, 3, 4);
  LabelMap labels(3, 3, {1, 0, 1, 0, 2, 0, 1, 0, 2}, {"a", "b"});
  const auto all = extract_patches(cube, labels, 1, PixelSelection::kAll);
  CHECK(all.size() == 9);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto [r, c] = all.coords[i];
    for (int k = 0; k < 4; ++k) CHECK(all.sample(i)[k] == cube.at(r, c, k));
  }
  const auto lab = extract_patches(cube, labels, 3, PixelSelection::kLabeled);
  std::size_t direct = 0;
  for (int v : labels.classes()) direct += v != 0;
  CHECK(lab.size() == direct);
  CHECK(lab.size() == 5);
}

TEST_CASE("extract_patches mirrors at borders") {
  const auto cube = ramp_cube(3, 3, 2);
  LabelMap labels(3, 3, std::vector<int>(9, 1), {"a"});
  const auto p = extract_patches(cube, labels, 3, PixelSelection::kAll);
  REQUIRE(p.size() == 9);
  // Corner (0, 0): window rows -1..1 map to 1, 0, 1.
  const auto s = p.sample(0);
  const int map[3] = {1, 0, 1};
  for (int dr = 0; dr < 3; ++dr) {
    for (int dc = 0; dc < 3; ++dc) {
      for (int k = 0; k < 2; ++k) {
        CHECK(s[(dr * 3 + dc) * 2 + k] == cube.at(map[dr], map[dc], k));
      }
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto [r, c] = p.coords[i];
    const auto center = p.center(i);
    for (int k = 0; k < 2; ++k) CHECK(center[k] == cube.at(r, c, k));
  }
  CHECK_THROWS_AS(extract_patches(cube, labels, 2, PixelSelection::kAll), ArgumentError);
  CHECK_THROWS_AS(extract_patches(cube, labels, 5, PixelSelection::kAll), ArgumentError);
}

TEST_CASE("synth_domain_pair identity shift matches class means") {
  SynthConfig cfg;
  cfg.snr_db.reset();
  cfg.brightness_jitter = 0.0;
  const auto pair = synth_domain_pair(cfg, 3);
  for (int c = 1; c <= cfg.classes; ++c) {
    const auto ms = class_mean(pair.source, c);
    const auto mt = class_mean(pair.target, c);
    for (std::size_t k = 0; k < ms.size(); ++k) CHECK(std::abs(ms[k] - mt[k]) < 1e-6);
  }
}

TEST_CASE("synth_domain_pair is deterministic") {
  SynthConfig cfg;
  cfg.shift.gain = 1.3;
  cfg.shift.mix_strength = 0.3;
  const auto a = synth_domain_pair(cfg, 11);
  const auto b = synth_domain_pair(cfg, 11);
  CHECK(a.source.cube.values() == b.source.cube.values());
  CHECK(a.target.cube.values() == b.target.cube.values());
  CHECK(a.target.labels.classes() == b.target.labels.classes());
  CHECK(a.shift_metadata == b.shift_metadata);
}

TEST_CASE("synth gain doubles the target class means") {
  SynthConfig cfg;
  cfg.snr_db.reset();
  cfg.brightness_jitter = 0.0;
  cfg.shift.gain = 2.0;
  const auto pair = synth_domain_pair(cfg, 5);
  for (int c = 1; c <= cfg.classes; ++c) {
    const auto ms = class_mean(pair.source, c);
    const auto mt = class_mean(pair.target, c);
    for (std::size_t k = 0; k < ms.size(); ++k) {
      if (2.0 * ms[k] < 1.0) CHECK(mt[k] == doctest::Approx(2.0 * ms[k]).epsilon(1e-5));
    }
  }
}

TEST_CASE("synth spectral angle grows with shift magnitude") {
  double previous = -1.0;
  for (double m : {0.1, 0.3, 0.6}) {
    SynthConfig cfg;
    cfg.snr_db.reset();
    cfg.brightness_jitter = 0.0;
    cfg.shift.gain_ripple = m;
    cfg.shift.offset = 0.05 * m;
    const auto pair = synth_domain_pair(cfg, 8);
    double angle = 0.0;
    for (int c = 1; c <= cfg.classes; ++c) {
      angle += spectral_angle(class_mean(pair.source, c), class_mean(pair.target, c));
    }
    angle /= cfg.classes;
    CHECK(angle > previous);
    previous = angle;
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.classes = 1;
  CHECK_THROWS_AS(synth_domain_pair(cfg, 1), ArgumentError);
  SynthConfig wide;
  wide.target_grid = {380.0, 1000.0, 40};
  CHECK_THROWS_AS(synth_domain_pair(wide, 1), ArgumentError);
  SynthConfig round;
  round.shift.gain = 1.5;
  round.snr_db.reset();
  const auto back = synth_config_from_json(synth_config_to_json(round));
  CHECK(back.shift.gain == 1.5);
  CHECK_FALSE(back.snr_db.has_value());
}

TEST_CASE("split_labels samples per class") {
  SynthConfig cfg;
  cfg.classes = 9;
  const auto pair = synth_domain_pair(cfg, 2);
  const auto s = split_labels(pair.source.labels, 5, 17);
  CHECK(s.train_indices.size() == 45);
  std::vector<int> per(10, 0);
  for (auto i : s.train_indices) ++per[pair.source.labels.classes()[i]];
  for (int c = 1; c <= 9; ++c) CHECK(per[c] == 5);
  CHECK(s.train_indices.size() + s.test_indices.size() == pair.source.labels.labeled_count());
  const auto again = split_labels(pair.source.labels, 5, 17);
  CHECK(again.train_indices == s.train_indices);
  CHECK(again.test_indices == s.test_indices);

  LabelMap tiny(1, 4, {1, 1, 2, 2}, {"a", "b"});
  CHECK_THROWS_AS(split_labels(tiny, 2, 0), SplitError);
  LabelMap scarce(1, 4, {1, 1, 1, 2}, {"a", "b"});
  try {
    split_labels(scarce, 2, 0);
    FAIL("expected a split error");
  } catch (const SplitError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}
