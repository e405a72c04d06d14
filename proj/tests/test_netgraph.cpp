#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hsi/inference.hpp"
#include "hsi/network.hpp"
#include "oracles/layer_gradcheck.hpp"

using namespace hsi;

namespace {

const char* kCrnnConfig =
    "input-103 → conv3-32 → conv3-32 → conv3-64 → conv3-64 → recur-256 → recur-512 → fc-64 → "
    "fc-64 → softmax-9";

const char* kSixPairConfig =
    "CRNN (Street) → DATL ← CRNN (Aerial)\n"
    "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
    "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
    "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
    "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
    "(conv4-128 + maxpooling) → DATL ← (conv5-512 + maxpooling)\n"
    "recur-64 → DATL ← recur-128\n"
    "fully connected-12\n";

int count_kind(const NetworkSpec& s, LayerKind k) {
  int n = 0;
  for (const auto& l : s.layers) n += l.kind == k;
  return n;
}

PatchSet random_patches(int n, int window, int bands, std::uint64_t seed) {
  Rng rng(seed);
  PatchSet p;
  p.window = window;
  p.bands = bands;
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(static_cast<std::size_t>(window) * window * bands);
    for (auto& v : s) v = uniform01(rng);
    p.push_back(s, 1 + i % 2, {0, i});
  }
  return p;
}

}  // namespace

TEST_CASE("parse the CRNN configuration string") {
  const auto spec = parse_config(kCrnnConfig);
  CHECK(spec.input_bands == 103);
  CHECK(count_kind(spec, LayerKind::kConv) == 4);
  CHECK(count_kind(spec, LayerKind::kMaxPool) == 4);
  CHECK(count_kind(spec, LayerKind::kRecurrent) == 2);
  CHECK(count_kind(spec, LayerKind::kDense) == 2);
  CHECK(spec.num_classes() == 9);
  CHECK(spec.layers[0].filters == 32);
  CHECK(spec.layers[4].filters == 64);
  CHECK(spec.layers[8].state_dim == 256);
  CHECK(spec.layers[9].state_dim == 512);
  CHECK(render_config(spec) == kCrnnConfig);
  CHECK(parse_config(render_config(spec)) == spec);
}

TEST_CASE("parse accepts ascii arrows and a single branch") {
  const auto spec = parse_config("input-274 -> conv4-128 -> recur-64");
  CHECK(count_kind(spec, LayerKind::kConv) == 1);
  CHECK(count_kind(spec, LayerKind::kRecurrent) == 1);
  CHECK(spec.layers[0].kernel == 4);
  CHECK_FALSE(spec.ends_in_softmax());
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_config("input-5 → softmax-2 → fc-3"), StructureError);
  try {
    parse_config("input-5 → fc-3 → blah-2");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("token 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("fc-3 → softmax-2"), ParseError);
  CHECK_THROWS_AS(parse_config("input-5 → recur-4 → conv3-2"), StructureError);
}

TEST_CASE("parse the six-pair FANN config") {
  const auto f = parse_fann_config(kSixPairConfig, 274, 360);
  CHECK(f.architecture == "CRNN");
  CHECK(f.source_name == "Street");
  CHECK(f.target_name == "Aerial");
  CHECK(f.aligned_layer_ids.size() == 6);
  CHECK(count_kind(f.source_branch, LayerKind::kConv) == 5);
  CHECK(count_kind(f.target_branch, LayerKind::kConv) == 5);
  CHECK(f.source_branch.layers[0].kernel == 4);
  CHECK(f.source_branch.layers[0].filters == 128);
  CHECK(f.target_branch.layers[0].kernel == 5);
  CHECK(f.target_branch.layers[0].filters == 512);
  CHECK(f.source_branch.layers.back().state_dim == 64);
  CHECK(f.target_branch.layers.back().state_dim == 128);
  CHECK(f.num_classes() == 12);
  // Conv rows align the pooled output.
  for (int k = 0; k < 5; ++k) {
    CHECK(f.source_branch.layers[f.aligned_layer_ids[k].first].kind == LayerKind::kMaxPool);
  }
  CHECK(f.source_branch.layers[f.aligned_layer_ids[5].first].kind == LayerKind::kRecurrent);
  const auto again = parse_fann_config(render_fann_config(f), 274, 360);
  CHECK(again.source_branch == f.source_branch);
  CHECK(again.target_branch == f.target_branch);
  CHECK(again.aligned_layer_ids == f.aligned_layer_ids);
  CHECK(render_fann_config(again) == render_fann_config(f));
}

TEST_CASE("init_params shapes and determinism") {
  const auto spec = parse_config("input-4 → fc-1");
  const auto p = init_params(spec, {1, 1, 4}, 3);
  CHECK(p.layers[0][0].shape == std::vector<int>{4, 1});
  CHECK(p.layers[0][1].shape == std::vector<int>{1});
  CHECK(p == init_params(spec, {1, 1, 4}, 3));
  CHECK_FALSE(p == init_params(spec, {1, 1, 4}, 4));
  for (double b : p.layers[0][1].data) CHECK(b == 0.0);

  const auto conv = parse_config("input-7 → conv3-32");
  const auto q = init_params(conv, {5, 5, 7}, 1);
  CHECK(q.layers[0][0].shape == std::vector<int>{3, 3, 7, 32});
  CHECK(q.layers[1].empty());
}

TEST_CASE("forward: softmax normalisation and zero weights") {
  const auto spec = parse_config("input-6 → conv3-4 → recur-5 → fc-7 → softmax-3");
  const Shape3 in{5, 5, 6};
  Network net(spec, in);
  auto params = init_params(spec, in, 9);
  const auto batch = random_patches(4, 5, 6, 2);
  const auto probs = predict_probs(net, params, batch);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double s = 0.0;
    for (double v : probs.row(i)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  params.set_zero();
  const auto flat = predict_probs(net, params, batch);
  for (double v : flat.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("identity-like kernel on a constant patch gives a constant map") {
  NetworkSpec spec;
  spec.input_bands = 1;
  spec.pool_after_conv = false;
  spec.layers = {LayerSpec::conv(3, 1)};
  const Shape3 in{3, 3, 1};
  Network net(spec, in);
  auto params = init_params(spec, in, 0);
  params.set_zero();
  params.layers[0][0].data[4] = 1.0;  // center tap
  std::vector<double> x(9, 0.7);
  const auto tr = net.forward(params, x, DropoutMode::kOff, nullptr);
  for (double v : tr.acts.back()) CHECK(v == doctest::Approx(0.7));
  CHECK_THROWS_AS(net.forward(params, std::vector<double>(8, 0.0), DropoutMode::kOff, nullptr),
                  ShapeError);
}

TEST_CASE("pooling is skipped for single-pixel inputs") {
  const auto spec = parse_config("input-8 → conv3-4 → conv3-4 → recur-3 → softmax-2");
  const auto shapes = infer_shapes(spec, {1, 1, 8});
  CHECK(shapes.back() == Shape3{1, 1, 2});
  CHECK(shapes[2] == Shape3{1, 1, 4});
  const auto pooled = infer_shapes(spec, {5, 5, 8});
  CHECK(pooled[2] == Shape3{2, 2, 4});
  CHECK(pooled[4] == Shape3{1, 1, 4});
}

TEST_CASE("forward is deterministic without dropout and taps are addressable") {
  const auto spec = parse_config("input-6 → conv3-4 → dropout-0.5 → fc-3 → softmax-2");
  const Shape3 in{3, 3, 6};
  Network net(spec, in);
  const auto params = init_params(spec, in, 4);
  const auto batch = random_patches(3, 3, 6, 5);
  CHECK(predict_probs(net, params, batch).data == predict_probs(net, params, batch).data);
  CHECK(find_tap(spec, "input") == 0);
  CHECK(find_tap(spec, "conv1") == 1);
  CHECK(find_tap(spec, "fc1") == 4);
  CHECK_THROWS_AS(find_tap(spec, "conv9"), ArgumentError);
  const auto raw = features_at(net, params, batch, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < raw.cols; ++k) CHECK(raw(i, k) == batch.sample(i)[k]);
  }
}

TEST_CASE("mc_forward degenerate cases") {
  const auto batch = random_patches(6, 3, 5, 1);
  const Shape3 in{3, 3, 5};
  const auto zero_rate = parse_config("input-5 → conv3-4 → dropout-0 → fc-6 → softmax-3");
  Network net0(zero_rate, in);
  const auto p0 = init_params(zero_rate, in, 2);
  for (const auto& m : mc_forward(net0, p0, batch, 8, 3)) CHECK(m.mutual_information == 0.0);

  const auto spec = parse_config("input-5 → conv3-4 → dropout-0.5 → fc-6 → softmax-3");
  Network net(spec, in);
  const auto p = init_params(spec, in, 2);
  for (const auto& m : mc_forward(net, p, batch, 1, 3)) CHECK(m.mutual_information == 0.0);
  for (const auto& m : mc_forward(net, p, batch, 16, 3)) {
    CHECK(m.mutual_information >= -1e-9);
    CHECK(m.entropy >= m.mutual_information - 1e-12);
  }
  CHECK_THROWS_AS(mc_forward(net, p, batch, 0, 3), ArgumentError);
  const auto missing = parse_config("input-5 → conv3-4 → fc-6 → softmax-3");
  Network net2(missing, in);
  CHECK_THROWS_AS(mc_forward(net2, init_params(missing, in, 1), batch, 4, 3), StructureError);
}

TEST_CASE("mirrored decoder") {
  const auto dense = parse_config("input-16 → fc-8");
  const auto d = mirrored_decoder(dense, {1, 1, 16});
  REQUIRE(d.spec.layers.size() >= 1);
  CHECK(d.spec.layers[0].kind == LayerKind::kDense);
  CHECK(d.spec.layers[0].units == 16);
  CHECK(d.output == Shape3{1, 1, 16});

  const auto conv = parse_config("input-3 → conv3-4 → conv3-6");
  const Shape3 in{4, 4, 3};
  const auto dc = mirrored_decoder(conv, in);
  CHECK(count_kind(dc.spec, LayerKind::kUpsample) == 2);
  CHECK(count_kind(dc.spec, LayerKind::kConv) == 2);
  CHECK(infer_shapes(dc.spec, dc.input).back() == in);
  CHECK_FALSE(dc.spec.layers.back().relu);

  CHECK_THROWS_AS(mirrored_decoder(parse_config("input-4 → conv1-2 → recur-64"), {1, 1, 4}),
                  UnsupportedStructureError);
  CHECK_THROWS_AS(mirrored_decoder(parse_config("input-4 → fc-2 → softmax-2"), {1, 1, 4}),
                  StructureError);
}

TEST_CASE("checkpoint round trip") {
  const auto spec = parse_config("input-5 → conv3-4 → recur-3 → softmax-2");
  const Shape3 in{3, 3, 5};
  const auto p = init_params(spec, in, 21);
  const auto dir = std::filesystem::temp_directory_path() / "hsi_test_ckpt";
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "m.json", {{"config", render_config(spec)}}, {{"trunk", p}});
  const auto back = read_checkpoint(dir / "m.json");
  CHECK(back.meta["config"] == render_config(spec));
  CHECK(back.blocks.at("trunk") == p);
  CHECK(back.blocks.at("trunk").checksum() == p.checksum());
}

TEST_CASE("analytic gradients match finite differences for every layer kind") {
  for (const auto& kind : oracle::layer_kinds()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = oracle::check_layer(kind, 100 + seed);
      INFO(kind << " seed " << seed);
      CHECK(r.worst() < 1e-4);
    }
  }
}

TEST_CASE("cross-entropy logit seed matches the probability path") {
  const auto spec = parse_config("input-4 → fc-5 → softmax-3");
  const Shape3 in{1, 1, 4};
  Network net(spec, in);
  const auto params = init_params(spec, in, 8);
  std::vector<double> x = {0.3, -0.2, 0.9, 0.1};
  const auto tr = net.forward(params, x, DropoutMode::kOff, nullptr);
  GradSeeds a(net.num_taps());
  a.logits = cross_entropy_logit_grad(tr.acts.back(), 1);
  GradSeeds b(net.num_taps());
  b.taps.back().assign(3, 0.0);
  b.taps.back()[1] = -1.0 / tr.acts.back()[1];
  auto ga = params.zeros_like();
  auto gb = params.zeros_like();
  net.backward(params, tr, a, ga);
  net.backward(params, tr, b, gb);
  for (std::size_t l = 0; l < ga.layers.size(); ++l) {
    for (std::size_t t = 0; t < ga.layers[l].size(); ++t) {
      for (std::size_t k = 0; k < ga.layers[l][t].size(); ++k) {
        CHECK(ga.layers[l][t].data[k] == doctest::Approx(gb.layers[l][t].data[k]));
      }
    }
  }
}
