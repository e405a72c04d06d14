#include "hsi/cube_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace hsi {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw FormatError("header key '" + key + "': not an integer: '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& what, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError(what + ": not a number: '" + v + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

float read_le_float(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                       (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void write_le_float(float v, unsigned char* p) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  p[0] = static_cast<unsigned char>(bits);
  p[1] = static_cast<unsigned char>(bits >> 8);
  p[2] = static_cast<unsigned char>(bits >> 16);
  p[3] = static_cast<unsigned char>(bits >> 24);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

HyperCube load_cube(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IngestionError("cannot open cube header " + header_path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(header_path.string() + ":" + std::to_string(line_no) +
                        ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  for (const char* key : {"height", "width", "bands", "kind", "payload", "wavelengths"}) {
    if (!kv.count(key)) throw FormatError("cube header missing key '" + std::string(key) + "'");
  }
  const int height = parse_int("height", kv["height"]);
  const int width = parse_int("width", kv["width"]);
  const int bands = parse_int("bands", kv["bands"]);
  if (height <= 0 || width <= 0 || bands <= 0) {
    throw FormatError("cube header dimensions must be positive");
  }
  const ValueKind kind = value_kind_from_string(kv["kind"]);
  std::vector<double> wavelengths;
  for (const auto& tok : split(kv["wavelengths"], ',')) {
    wavelengths.push_back(parse_double("wavelengths", tok));
  }
  if (wavelengths.size() != static_cast<std::size_t>(bands)) {
    throw FormatError("header declares " + std::to_string(bands) + " bands but lists " +
                      std::to_string(wavelengths.size()) + " wavelengths");
  }

  const fs::path payload = header_path.parent_path() / kv["payload"];
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw IngestionError("missing payload " + payload.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t expected = plane * bands * 4;
  if (bytes.size() != expected) {
    throw FormatError("payload " + payload.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected));
  }
  std::vector<float> values(plane * bands);
  for (int b = 0; b < bands; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const float v = read_le_float(&bytes[(b * plane + p) * 4]);
      if (std::isnan(v)) {
        throw DataError("NaN in payload at band " + std::to_string(b) + ", pixel " +
                        std::to_string(p));
      }
      values[p * bands + b] = v;
    }
  }
  return HyperCube(height, width, bands, std::move(wavelengths), std::move(values), kind);
}

void write_cube(const HyperCube& cube, const fs::path& header_path,
                const std::string& payload_name) {
  const std::string payload =
      payload_name.empty() ? header_path.stem().string() + ".bsq" : payload_name;
  {
    std::ofstream out(header_path);
    if (!out) throw IngestionError("cannot write " + header_path.string());
    out << "height=" << cube.height() << "\n"
        << "width=" << cube.width() << "\n"
        << "bands=" << cube.bands() << "\n"
        << "kind=" << to_string(cube.kind()) << "\n"
        << "payload=" << payload << "\n"
        << "wavelengths=";
    const auto& wl = cube.wavelengths_nm();
    for (std::size_t i = 0; i < wl.size(); ++i) {
      out << (i ? "," : "") << format_double(wl[i]);
    }
    out << "\n";
  }
  const std::size_t plane = static_cast<std::size_t>(cube.height()) * cube.width();
  const int bands = cube.bands();
  std::vector<unsigned char> bytes(plane * bands * 4);
  const auto& values = cube.values();
  for (int b = 0; b < bands; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      write_le_float(values[p * bands + b], &bytes[(b * plane + p) * 4]);
    }
  }
  const fs::path payload_path = header_path.parent_path() / payload;
  std::ofstream bin(payload_path, std::ios::binary);
  if (!bin) throw IngestionError("cannot write " + payload_path.string());
  bin.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

fs::path names_path_for(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".names.csv");
  return p;
}

LabelMap load_labels(const fs::path& csv_path, const fs::path& names_path, int height,
                     int width) {
  std::ifstream names_in(names_path);
  if (!names_in) throw IngestionError("cannot open class names " + names_path.string());
  std::map<int, std::string> names;
  std::string line;
  while (std::getline(names_in, line)) {
    line = trim(line);
    if (line.empty() || line == "id,name") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("class names: expected id,name");
    const int id = parse_int("class id", trim(line.substr(0, comma)));
    names[id] = trim(line.substr(comma + 1));
  }
  std::vector<std::string> ordered;
  for (const auto& [id, name] : names) {
    if (id != static_cast<int>(ordered.size()) + 1) {
      throw FormatError("class ids must be contiguous from 1 (gap before " +
                        std::to_string(id) + ")");
    }
    ordered.push_back(name);
  }

  std::ifstream in(csv_path);
  if (!in) throw IngestionError("cannot open labels " + csv_path.string());
  std::vector<int> classes(static_cast<std::size_t>(height) * width, 0);
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line == "row,col,class_id") continue;
    const auto cols = split(line, ',');
    if (cols.size() != 3) {
      throw FormatError(csv_path.string() + ":" + std::to_string(line_no) +
                        ": expected row,col,class_id");
    }
    const int r = parse_int("row", cols[0]);
    const int c = parse_int("col", cols[1]);
    const int id = parse_int("class_id", cols[2]);
    if (r < 0 || r >= height || c < 0 || c >= width) {
      throw FormatError(csv_path.string() + ":" + std::to_string(line_no) +
                        ": pixel outside image");
    }
    classes[static_cast<std::size_t>(r) * width + c] = id;
  }
  return LabelMap(height, width, std::move(classes), std::move(ordered));
}

void write_labels(const LabelMap& labels, const fs::path& csv_path,
                  const fs::path& names_path) {
  std::ofstream out(csv_path);
  if (!out) throw IngestionError("cannot write " + csv_path.string());
  out << "row,col,class_id\n";
  for (int r = 0; r < labels.height(); ++r) {
    for (int c = 0; c < labels.width(); ++c) {
      if (const int id = labels.at(r, c); id != 0) out << r << ',' << c << ',' << id << '\n';
    }
  }
  std::ofstream names(names_path);
  if (!names) throw IngestionError("cannot write " + names_path.string());
  names << "id,name\n";
  for (int i = 0; i < labels.num_classes(); ++i) {
    names << (i + 1) << ',' << labels.class_names()[i] << '\n';
  }
}

void write_split(const SplitSpec& split, const fs::path& path) {
  nlohmann::json j;
  j["per_class"] = split.per_class;
  j["seed"] = split.seed;
  j["train_indices"] = split.train_indices;
  j["test_indices"] = split.test_indices;
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

SplitSpec load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open split " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    SplitSpec s;
    s.per_class = j.at("per_class").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
    s.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("split " + path.string() + ": " + e.what());
  }
}

}  // namespace hsi
