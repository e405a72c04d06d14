#ifndef HSI_CUBE_HPP_
#define HSI_CUBE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsi/error.hpp"

namespace hsi {

enum class ValueKind { kReflectance, kRadiance };
enum class Domain { kSource, kTarget };

const char* to_string(ValueKind kind);
ValueKind value_kind_from_string(const std::string& s);
const char* to_string(Domain domain);
Domain domain_from_string(const std::string& s);

// height x width x bands raster, stored band-interleaved-by-pixel in memory.
// Construction validates every invariant; instances are immutable afterwards.
class HyperCube {
 public:
  HyperCube(int height, int width, int bands, std::vector<double> wavelengths_nm,
            std::vector<float> values, ValueKind kind);

  int height() const { return height_; }
  int width() const { return width_; }
  int bands() const { return bands_; }
  ValueKind kind() const { return kind_; }
  const std::vector<double>& wavelengths_nm() const { return wavelengths_nm_; }
  const std::vector<float>& values() const { return values_; }

  float at(int row, int col, int band) const {
    return values_[(static_cast<std::size_t>(row) * width_ + col) * bands_ + band];
  }
  std::span<const float> spectrum(int row, int col) const {
    return {values_.data() + (static_cast<std::size_t>(row) * width_ + col) * bands_,
            static_cast<std::size_t>(bands_)};
  }

 private:
  int height_;
  int width_;
  int bands_;
  std::vector<double> wavelengths_nm_;
  std::vector<float> values_;
  ValueKind kind_;
};

// Pixel annotations; id 0 means unlabeled, ids 1..C are named by class_names[id-1].
class LabelMap {
 public:
  LabelMap(int height, int width, std::vector<int> classes,
           std::vector<std::string> class_names);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  const std::vector<int>& classes() const { return classes_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  int at(int row, int col) const {
    return classes_[static_cast<std::size_t>(row) * width_ + col];
  }
  const std::string& name_of(int id) const { return class_names_.at(id - 1); }
  std::size_t labeled_count() const;

 private:
  int height_;
  int width_;
  std::vector<int> classes_;
  std::vector<std::string> class_names_;
};

void check_paired(const HyperCube& cube, const LabelMap& labels);

// N windowed samples, each window x window x bands (row, col, band order).
struct PatchSet {
  int window = 1;
  int bands = 0;
  std::vector<double> data;
  std::vector<int> labels;
  std::vector<std::pair<int, int>> coords;
  Domain domain = Domain::kSource;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(window) * window * bands;
  }
  std::span<const double> sample(std::size_t i) const {
    return {data.data() + i * sample_size(), sample_size()};
  }
  std::span<double> sample(std::size_t i) {
    return {data.data() + i * sample_size(), sample_size()};
  }
  // Spectrum of the window's center pixel.
  std::span<const double> center(std::size_t i) const;
  int num_classes() const;  // max label

  PatchSet subset(std::span<const std::size_t> indices) const;
  void append(const PatchSet& other);
  void push_back(std::span<const double> sample, int label, std::pair<int, int> coord);
  // Throws ArgumentError if any label is 0.
  void require_labeled(const char* what) const;
};

struct HyperScene {
  HyperCube cube;
  LabelMap labels;
};

// Two scenes sharing one label space. shift_metadata is a JSON document
// describing the generator parameters (empty for real data).
struct DomainPair {
  HyperScene source;
  HyperScene target;
  std::string shift_metadata;

  DomainPair(HyperScene source, HyperScene target, std::string shift_metadata);
};

struct SplitSpec {
  int per_class = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_indices;  // row-major pixel indices
  std::vector<std::size_t> test_indices;
};

// Descriptor of a well-known scene, for sizing synthetic stand-ins.
struct SceneDescriptor {
  const char* name;
  int bands;
  double first_nm;
  double last_nm;
  int classes;
  bool classes_inferred;
};

const std::vector<SceneDescriptor>& known_scenes();

}  // namespace hsi

#endif  // HSI_CUBE_HPP_
