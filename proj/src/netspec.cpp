#include "hsi/netspec.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>

namespace hsi {

namespace {

const std::string kRight = "\xE2\x86\x92";  // →
const std::string kLeft = "\xE2\x86\x90";   // ←

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Replaces ASCII arrows with their Unicode forms.
std::string normalize_arrows(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.compare(i, 2, "->") == 0) {
      out += kRight;
      ++i;
    } else if (text.compare(i, 2, "<-") == 0) {
      out += kLeft;
      ++i;
    } else {
      out += text[i];
    }
  }
  return out;
}

std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + sep.size();
  }
  return out;
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  if (s.empty()) return std::nullopt;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0;
  if (s.empty()) return std::nullopt;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_rate(double r) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r);
  return std::string(buf, ptr);
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

struct Token {
  bool is_input = false;
  int input_bands = 0;
  LayerSpec layer;
};

// Parses one token; `where` is used in error messages.
Token parse_token(const std::string& tok, const std::string& where) {
  const auto fail = [&](const std::string& why) -> Token {
    throw ParseError(where + ": " + why + " '" + tok + "'");
  };
  const auto positive = [&](std::optional<int> v, const char* what) {
    if (!v) fail(std::string("malformed ") + what);
    if (*v < 1) fail(std::string(what) + " must be >= 1 in");
    return *v;
  };
  Token t;
  if (starts_with(tok, "input-")) {
    t.is_input = true;
    t.input_bands = positive(to_int(std::string_view(tok).substr(6)), "band count");
    return t;
  }
  if (starts_with(tok, "conv")) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) return fail("malformed conv token");
    const int k = positive(to_int(std::string_view(tok).substr(4, dash - 4)), "kernel size");
    const int f = positive(to_int(std::string_view(tok).substr(dash + 1)), "filter count");
    t.layer = LayerSpec::conv(k, f);
    return t;
  }
  if (starts_with(tok, "recur-")) {
    t.layer = LayerSpec::recurrent(positive(to_int(std::string_view(tok).substr(6)), "state dim"));
    return t;
  }
  if (starts_with(tok, "fc-")) {
    t.layer = LayerSpec::dense(positive(to_int(std::string_view(tok).substr(3)), "unit count"));
    return t;
  }
  if (starts_with(tok, "fully connected-")) {
    t.layer = LayerSpec::dense(positive(to_int(std::string_view(tok).substr(16)), "unit count"));
    return t;
  }
  if (starts_with(tok, "softmax-")) {
    t.layer = LayerSpec::softmax(positive(to_int(std::string_view(tok).substr(8)), "class count"));
    return t;
  }
  if (starts_with(tok, "dropout-")) {
    const auto r = to_double(std::string_view(tok).substr(8));
    if (!r) return fail("malformed dropout rate");
    if (*r < 0.0 || *r >= 1.0) return fail("dropout rate must be in [0, 1)");
    t.layer = LayerSpec::dropout(*r);
    return t;
  }
  return fail("unknown token");
}

std::string render_layer(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConv:
      return "conv" + std::to_string(l.kernel) + "-" + std::to_string(l.filters);
    case LayerKind::kRecurrent:
      return "recur-" + std::to_string(l.state_dim);
    case LayerKind::kDense:
      return "fc-" + std::to_string(l.units);
    case LayerKind::kSoftmax:
      return "softmax-" + std::to_string(l.classes);
    case LayerKind::kDropout:
      return "dropout-" + format_rate(l.rate);
    case LayerKind::kMaxPool:
      return "maxpool";
    case LayerKind::kUpsample:
      return "upsample-" + to_string(l.target);
    case LayerKind::kReshape:
      return "reshape-" + to_string(l.target);
  }
  return "?";
}

void append_layer(NetworkSpec& spec, const LayerSpec& layer, bool insert_pool) {
  spec.layers.push_back(layer);
  if (layer.kind == LayerKind::kConv && insert_pool) {
    spec.layers.push_back(LayerSpec::maxpool(true));
  }
}

}  // namespace

std::string to_string(Shape3 s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

LayerSpec LayerSpec::conv(int kernel, int filters) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.kernel = kernel;
  l.filters = filters;
  return l;
}
LayerSpec LayerSpec::maxpool(bool implicit) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.implicit = implicit;
  l.relu = false;
  return l;
}
LayerSpec LayerSpec::recurrent(int state_dim) {
  LayerSpec l;
  l.kind = LayerKind::kRecurrent;
  l.state_dim = state_dim;
  l.relu = false;
  return l;
}
LayerSpec LayerSpec::dense(int units, bool relu) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.units = units;
  l.relu = relu;
  return l;
}
LayerSpec LayerSpec::softmax(int classes) {
  LayerSpec l;
  l.kind = LayerKind::kSoftmax;
  l.classes = classes;
  l.relu = false;
  return l;
}
LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::kDropout;
  l.rate = rate;
  l.relu = false;
  return l;
}
LayerSpec LayerSpec::upsample(Shape3 target) {
  LayerSpec l;
  l.kind = LayerKind::kUpsample;
  l.target = target;
  l.relu = false;
  return l;
}
LayerSpec LayerSpec::reshape(Shape3 target) {
  LayerSpec l;
  l.kind = LayerKind::kReshape;
  l.target = target;
  l.relu = false;
  return l;
}

bool LayerSpec::has_params() const {
  return kind == LayerKind::kConv || kind == LayerKind::kDense ||
         kind == LayerKind::kSoftmax || kind == LayerKind::kRecurrent;
}

bool NetworkSpec::ends_in_softmax() const {
  return !layers.empty() && layers.back().kind == LayerKind::kSoftmax;
}

int NetworkSpec::num_classes() const { return ends_in_softmax() ? layers.back().classes : 0; }

bool NetworkSpec::has_recurrent() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::kRecurrent; });
}

bool NetworkSpec::has_dropout() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::kDropout; });
}

int NetworkSpec::trunk_depth() const {
  int n = 0;
  for (const auto& l : layers) {
    if (l.has_params() && l.kind != LayerKind::kSoftmax) ++n;
  }
  return n;
}

int NetworkSpec::trunk_layer_index(int n) const {
  int seen = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.has_params() && l.kind != LayerKind::kSoftmax && ++seen == n) {
      return static_cast<int>(i);
    }
  }
  throw ArgumentError("trunk has no parameter block " + std::to_string(n));
}

NetworkSpec parse_config(std::string_view text, ParseOptions options) {
  const auto tokens = split_on(normalize_arrows(text), kRight);
  NetworkSpec spec;
  spec.pool_after_conv = options.insert_pool;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string tok = trim(tokens[i]);
    const std::string where = "token " + std::to_string(i + 1);
    if (tok.empty()) throw ParseError(where + ": empty token");
    const Token t = parse_token(tok, where);
    if (t.is_input) {
      if (i != 0) throw ParseError(where + ": input-N must be the first token");
      spec.input_bands = t.input_bands;
      continue;
    }
    if (i == 0) throw ParseError("token 1: config must start with input-N");
    append_layer(spec, t.layer, options.insert_pool);
  }
  validate(spec);
  return spec;
}

std::string render_config(const NetworkSpec& spec) {
  std::string out = "input-" + std::to_string(spec.input_bands);
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::kMaxPool && l.implicit) continue;
    out += " " + kRight + " " + render_layer(l);
  }
  return out;
}

void validate(const NetworkSpec& spec) {
  if (spec.input_bands < 1) throw StructureError("network input must have at least one band");
  bool seen_recurrent = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + render_layer(l) + ")";
    switch (l.kind) {
      case LayerKind::kConv:
        if (l.kernel < 1 || l.filters < 1) throw StructureError(where + ": bad conv parameters");
        if (seen_recurrent) {
          throw StructureError(where + ": convolution after a recurrent layer");
        }
        if (spec.pool_after_conv &&
            (i + 1 >= spec.layers.size() || spec.layers[i + 1].kind != LayerKind::kMaxPool)) {
          throw StructureError(where + ": convolution must be followed by max pooling");
        }
        break;
      case LayerKind::kMaxPool:
        if (seen_recurrent) throw StructureError(where + ": pooling after a recurrent layer");
        break;
      case LayerKind::kRecurrent:
        if (l.state_dim < 1) throw StructureError(where + ": state dim must be >= 1");
        seen_recurrent = true;
        break;
      case LayerKind::kDense:
        if (l.units < 1) throw StructureError(where + ": units must be >= 1");
        break;
      case LayerKind::kSoftmax:
        if (l.classes < 1) throw StructureError(where + ": classes must be >= 1");
        if (i + 1 != spec.layers.size()) {
          throw StructureError(where + ": softmax must be the final layer");
        }
        break;
      case LayerKind::kDropout:
        if (l.rate < 0.0 || l.rate >= 1.0) throw StructureError(where + ": rate outside [0, 1)");
        break;
      case LayerKind::kUpsample:
      case LayerKind::kReshape:
        break;
    }
  }
}

std::vector<Shape3> infer_shapes(const NetworkSpec& spec, Shape3 input) {
  if (input.c != spec.input_bands) {
    throw ShapeError("input: expected " + std::to_string(spec.input_bands) + " bands, got " +
                     std::to_string(input.c));
  }
  if (input.h < 1 || input.w < 1) throw ShapeError("input: empty spatial extent");
  std::vector<Shape3> shapes{input};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    Shape3 s = shapes.back();
    switch (l.kind) {
      case LayerKind::kConv:
        s.c = l.filters;
        break;
      case LayerKind::kMaxPool:
        if (s.h >= 2 && s.w >= 2) {
          s.h /= 2;
          s.w /= 2;
        }
        break;
      case LayerKind::kRecurrent:
        s = {1, 1, l.state_dim};
        break;
      case LayerKind::kDense:
        s = {1, 1, l.units};
        break;
      case LayerKind::kSoftmax:
        s = {1, 1, l.classes};
        break;
      case LayerKind::kDropout:
        break;
      case LayerKind::kUpsample:
        if (l.target.c != s.c || l.target.h < s.h || l.target.w < s.w) {
          throw ShapeError(layer_name(spec, static_cast<int>(i)) + ": cannot upsample " +
                           to_string(s) + " to " + to_string(l.target));
        }
        s = l.target;
        break;
      case LayerKind::kReshape:
        if (l.target.size() != s.size()) {
          throw ShapeError(layer_name(spec, static_cast<int>(i)) + ": cannot reshape " +
                           to_string(s) + " to " + to_string(l.target));
        }
        s = l.target;
        break;
    }
    shapes.push_back(s);
  }
  return shapes;
}

std::string layer_name(const NetworkSpec& spec, int index) {
  if (index < 0 || index >= static_cast<int>(spec.layers.size())) {
    throw ArgumentError("layer index " + std::to_string(index) + " out of range");
  }
  std::map<LayerKind, int> count;
  for (int i = 0; i <= index; ++i) ++count[spec.layers[i].kind];
  const auto& l = spec.layers[index];
  const std::string n = std::to_string(count[l.kind]);
  switch (l.kind) {
    case LayerKind::kConv: return "conv" + n;
    case LayerKind::kMaxPool: return "pool" + n;
    case LayerKind::kRecurrent: return "recur" + n;
    case LayerKind::kDense: return "fc" + n;
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kDropout: return "dropout" + n;
    case LayerKind::kUpsample: return "up" + n;
    case LayerKind::kReshape: return "reshape" + n;
  }
  return "layer" + std::to_string(index);
}

int find_tap(const NetworkSpec& spec, std::string_view name) {
  if (name == "input") return 0;
  if (const auto n = to_int(name)) {
    if (*n < 0 || *n > static_cast<int>(spec.layers.size())) {
      throw ArgumentError("tap index " + std::string(name) + " out of range");
    }
    return *n;
  }
  for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
    if (layer_name(spec, i) == name) return i + 1;
  }
  throw ArgumentError("unknown layer '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// FANN grammar

namespace {

struct Side {
  LayerSpec layer;
  bool explicit_pool = false;
};

Side parse_side(std::string text, const std::string& where) {
  text = trim(text);
  Side side;
  if (!text.empty() && text.front() == '(' && text.back() == ')') {
    text = trim(std::string_view(text).substr(1, text.size() - 2));
    const auto plus = text.find('+');
    if (plus != std::string::npos) {
      if (trim(std::string_view(text).substr(plus + 1)) != "maxpooling") {
        throw ParseError(where + ": expected '+ maxpooling' in '" + text + "'");
      }
      side.explicit_pool = true;
      text = trim(std::string_view(text).substr(0, plus));
    }
  }
  const Token t = parse_token(text, where);
  if (t.is_input) throw ParseError(where + ": input token not allowed in an alignment row");
  if (side.explicit_pool && t.layer.kind != LayerKind::kConv) {
    throw ParseError(where + ": only convolutions take '+ maxpooling'");
  }
  side.layer = t.layer;
  return side;
}

std::string render_side(const LayerSpec& l) {
  if (l.kind == LayerKind::kConv) return "(" + render_layer(l) + " + maxpooling)";
  return render_layer(l);
}

// "CRNN (Street)" -> {"CRNN", "Street"}
std::optional<std::pair<std::string, std::string>> header_side(const std::string& s) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')') return std::nullopt;
  std::string arch = trim(std::string_view(s).substr(0, open));
  std::string name = trim(std::string_view(s).substr(open + 1, s.size() - open - 2));
  if (arch.empty() || name.empty()) return std::nullopt;
  if (!std::all_of(arch.begin(), arch.end(), [](unsigned char c) { return std::isalnum(c); })) {
    return std::nullopt;
  }
  return std::make_pair(arch, name);
}

}  // namespace

FannSpec parse_fann_config(std::string_view text, int source_bands, int target_bands) {
  std::string norm = normalize_arrows(text);
  std::replace(norm.begin(), norm.end(), ';', '\n');
  FannSpec spec;
  spec.source_branch.input_bands = source_bands;
  spec.target_branch.input_bands = target_bands;
  bool head_seen = false;
  int row = 0;
  for (const auto& raw : split_on(norm, "\n")) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    ++row;
    const std::string where = "row " + std::to_string(row);
    if (head_seen) throw ParseError(where + ": rows after the classification head");
    const auto datl = line.find("DATL");
    if (datl != std::string::npos) {
      std::string left = trim(std::string_view(line).substr(0, datl));
      std::string right = trim(std::string_view(line).substr(datl + 4));
      if (left.size() < kRight.size() || left.compare(left.size() - kRight.size(), kRight.size(), kRight) != 0) {
        throw ParseError(where + ": expected '" + kRight + " DATL'");
      }
      if (right.compare(0, kLeft.size(), kLeft) != 0) {
        throw ParseError(where + ": expected 'DATL " + kLeft + "'");
      }
      left = trim(std::string_view(left).substr(0, left.size() - kRight.size()));
      right = trim(std::string_view(right).substr(kLeft.size()));
      const auto hl = header_side(left);
      const auto hr = header_side(right);
      if (hl && hr && left.find('+') == std::string::npos) {
        if (row != 1) throw ParseError(where + ": branch header must be the first row");
        if (hl->first != hr->first) {
          throw ParseError(where + ": branches must share one architecture name");
        }
        spec.architecture = hl->first;
        spec.source_name = hl->second;
        spec.target_name = hr->second;
        continue;
      }
      const Side ls = parse_side(left, where + " (left)");
      const Side rs = parse_side(right, where + " (right)");
      for (const auto& l : {ls.layer, rs.layer}) {
        if (l.kind == LayerKind::kSoftmax || l.kind == LayerKind::kDropout) {
          throw ParseError(where + ": layer kind cannot be aligned");
        }
      }
      append_layer(spec.source_branch, ls.layer, true);
      append_layer(spec.target_branch, rs.layer, true);
      spec.aligned_layer_ids.emplace_back(
          static_cast<int>(spec.source_branch.layers.size()) - 1,
          static_cast<int>(spec.target_branch.layers.size()) - 1);
      continue;
    }
    // Classification head: fc tokens ending in the class layer.
    const auto tokens = split_on(line, kRight);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      Token t = parse_token(trim(tokens[i]), where);
      if (t.is_input || t.layer.kind != LayerKind::kDense) {
        throw ParseError(where + ": head rows hold fully connected layers only");
      }
      if (i + 1 == tokens.size()) t.layer = LayerSpec::softmax(t.layer.units);
      spec.head.layers.push_back(t.layer);
    }
    head_seen = true;
  }
  if (!head_seen) throw StructureError("FANN config has no classification head");
  validate(spec);
  return spec;
}

std::string render_fann_config(const FannSpec& spec) {
  std::string out;
  if (!spec.source_name.empty()) {
    out += spec.architecture + " (" + spec.source_name + ") " + kRight + " DATL " + kLeft + " " +
           spec.architecture + " (" + spec.target_name + ")\n";
  }
  for (const auto& [s, t] : spec.aligned_layer_ids) {
    auto side = [](const NetworkSpec& branch, int idx) {
      const LayerSpec& l = branch.layers[idx];
      if (l.kind == LayerKind::kMaxPool && idx > 0) return render_side(branch.layers[idx - 1]);
      return render_side(l);
    };
    out += side(spec.source_branch, s) + " " + kRight + " DATL " + kLeft + " " +
           side(spec.target_branch, t) + "\n";
  }
  for (std::size_t i = 0; i < spec.head.layers.size(); ++i) {
    const auto& l = spec.head.layers[i];
    const int width = l.kind == LayerKind::kSoftmax ? l.classes : l.units;
    out += (i ? " " + kRight + " " : "") + "fully connected-" + std::to_string(width);
  }
  return out;
}

void validate(const FannSpec& spec) {
  validate(spec.source_branch);
  validate(spec.target_branch);
  if (spec.source_branch.ends_in_softmax() || spec.target_branch.ends_in_softmax()) {
    throw StructureError("FANN branches must not end in softmax");
  }
  if (spec.aligned_layer_ids.empty()) throw StructureError("FANN needs at least one aligned layer pair");
  int prev_s = -1, prev_t = -1;
  for (const auto& [s, t] : spec.aligned_layer_ids) {
    if (s < 0 || s >= static_cast<int>(spec.source_branch.layers.size()) || t < 0 ||
        t >= static_cast<int>(spec.target_branch.layers.size())) {
      throw StructureError("aligned pair references a missing layer");
    }
    if (s <= prev_s || t <= prev_t) throw StructureError("aligned pairs must be in layer order");
    prev_s = s;
    prev_t = t;
  }
  if (!spec.head.ends_in_softmax()) throw StructureError("FANN head must end in a class layer");
}

// ---------------------------------------------------------------------------

DecoderSpec mirrored_decoder(const NetworkSpec& encoder, Shape3 input) {
  if (encoder.ends_in_softmax()) {
    throw StructureError("mirrored decoder expects a trunk without a softmax tail");
  }
  if (encoder.has_recurrent()) {
    throw UnsupportedStructureError("mirrored decoder is defined for feedforward trunks only");
  }
  const auto shapes = infer_shapes(encoder, input);
  DecoderSpec dec;
  dec.input = shapes.back();
  dec.output = input;
  dec.spec.input_bands = dec.input.c;
  dec.spec.pool_after_conv = false;
  for (int i = static_cast<int>(encoder.layers.size()) - 1; i >= 0; --i) {
    const auto& l = encoder.layers[i];
    const Shape3 before = shapes[i];
    const Shape3 after = shapes[i + 1];
    switch (l.kind) {
      case LayerKind::kDense:
        dec.spec.layers.push_back(LayerSpec::dense(static_cast<int>(before.size())));
        if (before.h != 1 || before.w != 1) dec.spec.layers.push_back(LayerSpec::reshape(before));
        break;
      case LayerKind::kMaxPool:
        if (!(before == after)) dec.spec.layers.push_back(LayerSpec::upsample(before));
        break;
      case LayerKind::kConv:
        dec.spec.layers.push_back(LayerSpec::conv(l.kernel, before.c));
        break;
      case LayerKind::kDropout:
        break;
      default:
        throw UnsupportedStructureError("mirrored decoder cannot invert layer " +
                                        layer_name(encoder, i));
    }
  }
  // Reconstructions are unconstrained reals: the final parameterised layer is linear.
  for (auto it = dec.spec.layers.rbegin(); it != dec.spec.layers.rend(); ++it) {
    if (it->has_params()) {
      it->relu = false;
      break;
    }
  }
  return dec;
}

}  // namespace hsi
