#include "hsi/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "hsi/rng.hpp"

namespace hsi {
namespace fs = std::filesystem;

Tensor::Tensor(std::vector<int> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  data.assign(n, 0.0);
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    for (const auto& t : l) n += t.size();
  }
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  z.seed = seed;
  z.layers.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto& t : layers[i]) z.layers[i].emplace_back(t.shape);
  }
  return z;
}

void ParamStore::set_zero() {
  for (auto& l : layers) {
    for (auto& t : l) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
}

void ParamStore::add_scaled(const ParamStore& other, double scale, std::size_t first,
                            std::size_t last) {
  last = std::min(last, layers.size());
  for (std::size_t i = first; i < last; ++i) {
    for (std::size_t k = 0; k < layers[i].size(); ++k) {
      auto& dst = layers[i][k].data;
      const auto& src = other.layers[i][k].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
  }
}

bool ParamStore::all_finite() const {
  for (const auto& l : layers) {
    for (const auto& t : l) {
      for (double v : t.data) {
        if (!std::isfinite(v)) return false;
      }
    }
  }
  return true;
}

std::uint64_t ParamStore::checksum(std::size_t first, std::size_t last) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  last = std::min(last, layers.size());
  for (std::size_t i = first; i < last; ++i) {
    for (const auto& t : layers[i]) {
      for (double v : t.data) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xFF;
          h *= 0x100000001b3ULL;
        }
      }
    }
  }
  return h;
}

ParamStore init_params(const NetworkSpec& spec, Shape3 input, std::uint64_t seed) {
  const auto shapes = infer_shapes(spec, input);
  ParamStore p;
  p.seed = seed;
  p.layers.resize(spec.layers.size());
  Rng rng(mix_seed(seed, 0x1417));
  const auto fill = [&](Tensor& t, int fan_in, bool rectified) {
    const double limit = std::sqrt((rectified ? 6.0 : 3.0) / std::max(fan_in, 1));
    for (auto& v : t.data) v = uniform(rng, -limit, limit);
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Shape3 in = shapes[i];
    auto& dst = p.layers[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        Tensor k({l.kernel, l.kernel, in.c, l.filters});
        fill(k, l.kernel * l.kernel * in.c, l.relu);
        dst.push_back(std::move(k));
        dst.emplace_back(std::vector<int>{l.filters});
        break;
      }
      case LayerKind::kDense:
      case LayerKind::kSoftmax: {
        const int out = l.kind == LayerKind::kDense ? l.units : l.classes;
        Tensor w({static_cast<int>(in.size()), out});
        fill(w, static_cast<int>(in.size()), l.kind == LayerKind::kDense && l.relu);
        dst.push_back(std::move(w));
        dst.emplace_back(std::vector<int>{out});
        break;
      }
      case LayerKind::kRecurrent: {
        const int m = in.h * in.w;
        const int d = l.state_dim;
        Tensor wx({m, 3 * d});
        fill(wx, m, false);
        Tensor uh({d, 3 * d});
        fill(uh, d, false);
        dst.push_back(std::move(wx));
        dst.push_back(std::move(uh));
        dst.emplace_back(std::vector<int>{3 * d});
        break;
      }
      default:
        break;
    }
  }
  return p;
}

namespace {

void put_le(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(const fs::path& manifest_path, nlohmann::json meta,
                      const std::map<std::string, ParamStore>& blocks) {
  fs::path bin_path = manifest_path;
  bin_path.replace_extension(".bin");
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IngestionError("cannot write " + bin_path.string());
  std::size_t offset = 0;
  nlohmann::json manifest_blocks = nlohmann::json::object();
  for (const auto& [name, store] : blocks) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : store.layers) {
      nlohmann::json tensors = nlohmann::json::array();
      for (const auto& t : l) {
        tensors.push_back({{"shape", t.shape}, {"offset", offset}});
        for (double v : t.data) put_le(bin, v);
        offset += t.size();
      }
      layers.push_back(tensors);
    }
    manifest_blocks[name] = {{"seed", store.seed}, {"layers", layers}};
  }
  meta["format"] = "hsi-checkpoint-1";
  meta["payload"] = bin_path.filename().string();
  meta["payload_values"] = offset;
  meta["blocks"] = manifest_blocks;
  std::ofstream out(manifest_path);
  if (!out) throw IngestionError("cannot write " + manifest_path.string());
  out << meta.dump(1) << "\n";
}

Checkpoint read_checkpoint(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IngestionError("cannot open checkpoint " + manifest_path.string());
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(in);
    if (ck.meta.value("format", "") != "hsi-checkpoint-1") {
      throw FormatError("not a checkpoint manifest: " + manifest_path.string());
    }
    const fs::path bin_path = manifest_path.parent_path() / ck.meta.at("payload").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IngestionError("missing checkpoint payload " + bin_path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                     std::istreambuf_iterator<char>());
    const std::size_t total = ck.meta.at("payload_values").get<std::size_t>();
    if (bytes.size() != total * 8) throw FormatError("checkpoint payload has the wrong size");
    for (const auto& [name, block] : ck.meta.at("blocks").items()) {
      ParamStore store;
      store.seed = block.at("seed").get<std::uint64_t>();
      for (const auto& layer : block.at("layers")) {
        auto& dst = store.layers.emplace_back();
        for (const auto& t : layer) {
          Tensor tensor(t.at("shape").get<std::vector<int>>());
          const std::size_t off = t.at("offset").get<std::size_t>();
          if (off + tensor.size() > total) throw FormatError("tensor outside checkpoint payload");
          for (std::size_t i = 0; i < tensor.size(); ++i) {
            tensor.data[i] = get_le(&bytes[(off + i) * 8]);
          }
          dst.push_back(std::move(tensor));
        }
      }
      ck.blocks.emplace(name, std::move(store));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + manifest_path.string() + ": " + e.what());
  }
  ck.meta.erase("blocks");
  return ck;
}

}  // namespace hsi
