#include "hsi/cube.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hsi {

const char* to_string(ValueKind kind) {
  return kind == ValueKind::kReflectance ? "reflectance" : "radiance";
}

ValueKind value_kind_from_string(const std::string& s) {
  if (s == "reflectance") return ValueKind::kReflectance;
  if (s == "radiance") return ValueKind::kRadiance;
  throw FormatError("unknown value kind '" + s + "'");
}

const char* to_string(Domain domain) {
  return domain == Domain::kSource ? "source" : "target";
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ArgumentError("unknown domain '" + s + "'");
}

HyperCube::HyperCube(int height, int width, int bands,
                     std::vector<double> wavelengths_nm, std::vector<float> values,
                     ValueKind kind)
    : height_(height),
      width_(width),
      bands_(bands),
      wavelengths_nm_(std::move(wavelengths_nm)),
      values_(std::move(values)),
      kind_(kind) {
  if (height <= 0 || width <= 0 || bands <= 0) {
    throw FormatError("cube dimensions must be positive");
  }
  if (wavelengths_nm_.size() != static_cast<std::size_t>(bands)) {
    throw FormatError("expected " + std::to_string(bands) + " wavelengths, got " +
                      std::to_string(wavelengths_nm_.size()));
  }
  for (std::size_t b = 1; b < wavelengths_nm_.size(); ++b) {
    if (!(wavelengths_nm_[b] > wavelengths_nm_[b - 1])) {
      throw FormatError("wavelengths must be strictly increasing (band " +
                        std::to_string(b) + ")");
    }
  }
  const std::size_t expected = static_cast<std::size_t>(height) * width * bands;
  if (values_.size() != expected) {
    throw FormatError("cube holds " + std::to_string(values_.size()) +
                      " values, expected " + std::to_string(expected));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const float v = values_[i];
    if (!std::isfinite(v)) {
      throw DataError("non-finite value at element " + std::to_string(i));
    }
    if (v < 0.0f || (kind_ == ValueKind::kReflectance && v > 1.0f)) {
      throw DataError(std::string("value ") + std::to_string(v) +
                      " out of range for " + to_string(kind_) + " at element " +
                      std::to_string(i));
    }
  }
}

LabelMap::LabelMap(int height, int width, std::vector<int> classes,
                   std::vector<std::string> class_names)
    : height_(height),
      width_(width),
      classes_(std::move(classes)),
      class_names_(std::move(class_names)) {
  if (height <= 0 || width <= 0) throw FormatError("label map dimensions must be positive");
  if (classes_.size() != static_cast<std::size_t>(height) * width) {
    throw FormatError("label map size does not match its dimensions");
  }
  const int c = num_classes();
  for (int id : classes_) {
    if (id < 0 || id > c) {
      throw FormatError("class id " + std::to_string(id) + " has no name (" +
                        std::to_string(c) + " classes declared)");
    }
  }
}

std::size_t LabelMap::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(classes_.begin(), classes_.end(), [](int id) { return id != 0; }));
}

void check_paired(const HyperCube& cube, const LabelMap& labels) {
  if (cube.height() != labels.height() || cube.width() != labels.width()) {
    throw ShapeError("label map " + std::to_string(labels.height()) + "x" +
                     std::to_string(labels.width()) + " does not match cube " +
                     std::to_string(cube.height()) + "x" + std::to_string(cube.width()));
  }
}

std::span<const double> PatchSet::center(std::size_t i) const {
  const std::size_t mid = static_cast<std::size_t>(window / 2);
  const std::size_t offset = (mid * window + mid) * bands;
  return {data.data() + i * sample_size() + offset, static_cast<std::size_t>(bands)};
}

int PatchSet::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

PatchSet PatchSet::subset(std::span<const std::size_t> indices) const {
  PatchSet out;
  out.window = window;
  out.bands = bands;
  out.domain = domain;
  out.data.reserve(indices.size() * sample_size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ArgumentError("patch index out of range");
    out.push_back(sample(i), labels[i], coords[i]);
  }
  return out;
}

void PatchSet::append(const PatchSet& other) {
  if (other.size() == 0) return;
  if (size() == 0 && data.empty()) {
    window = other.window;
    bands = other.bands;
  }
  if (other.window != window || other.bands != bands) {
    throw ShapeError("cannot append patches of a different shape");
  }
  data.insert(data.end(), other.data.begin(), other.data.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  coords.insert(coords.end(), other.coords.begin(), other.coords.end());
}

void PatchSet::push_back(std::span<const double> s, int label, std::pair<int, int> coord) {
  if (s.size() != sample_size()) throw ShapeError("sample does not match patch shape");
  data.insert(data.end(), s.begin(), s.end());
  labels.push_back(label);
  coords.push_back(coord);
}

void PatchSet::require_labeled(const char* what) const {
  for (int l : labels) {
    if (l <= 0) throw ArgumentError(std::string(what) + ": contains unlabeled samples");
  }
}

DomainPair::DomainPair(HyperScene src, HyperScene tgt, std::string meta)
    : source(std::move(src)), target(std::move(tgt)), shift_metadata(std::move(meta)) {
  check_paired(source.cube, source.labels);
  check_paired(target.cube, target.labels);
  const auto& a = source.labels.class_names();
  const auto& b = target.labels.class_names();
  if (std::set<std::string>(a.begin(), a.end()) != std::set<std::string>(b.begin(), b.end())) {
    throw ArgumentError("source and target label spaces differ");
  }
}

const std::vector<SceneDescriptor>& known_scenes() {
  static const std::vector<SceneDescriptor> scenes = {
      {"pavia_university", 103, 430.0, 860.0, 9, false},
      {"houston", 144, 380.0, 1050.0, 15, false},
      {"wetland_aerial", 360, 400.0, 2450.0, 12, true},
      {"wetland_street", 274, 400.0, 1000.0, 12, true},
  };
  return scenes;
}

}  // namespace hsi
