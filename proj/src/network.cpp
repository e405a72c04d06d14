#include "hsi/network.hpp"

#include <algorithm>
#include <cmath>

namespace hsi {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void conv_forward(const LayerSpec& l, Shape3 in, const std::vector<Tensor>& p,
                  std::span<const double> x, std::vector<double>& y) {
  const int K = l.kernel, F = l.filters, C = in.c, H = in.h, W = in.w;
  const int pad = (K - 1) / 2;
  const double* kernel = p[0].data.data();
  const double* bias = p[1].data.data();
  y.assign(static_cast<std::size_t>(H) * W * F, 0.0);
  for (int r = 0; r < H; ++r) {
    for (int q = 0; q < W; ++q) {
      double* out = &y[(static_cast<std::size_t>(r) * W + q) * F];
      std::copy(bias, bias + F, out);
      for (int kr = 0; kr < K; ++kr) {
        const int rr = r + kr - pad;
        if (rr < 0 || rr >= H) continue;
        for (int kq = 0; kq < K; ++kq) {
          const int qq = q + kq - pad;
          if (qq < 0 || qq >= W) continue;
          const double* xp = &x[(static_cast<std::size_t>(rr) * W + qq) * C];
          const double* kp = kernel + static_cast<std::size_t>(kr * K + kq) * C * F;
          for (int ch = 0; ch < C; ++ch) {
            const double xv = xp[ch];
            if (xv == 0.0) continue;
            const double* kk = kp + static_cast<std::size_t>(ch) * F;
            for (int f = 0; f < F; ++f) out[f] += xv * kk[f];
          }
        }
      }
      if (l.relu) {
        for (int f = 0; f < F; ++f) out[f] = std::max(out[f], 0.0);
      }
    }
  }
}

void conv_backward(const LayerSpec& l, Shape3 in, const std::vector<Tensor>& p,
                   std::span<const double> x, std::span<const double> y,
                   std::vector<double>& gy, std::vector<Tensor>& gp,
                   std::vector<double>* gx) {
  const int K = l.kernel, F = l.filters, C = in.c, H = in.h, W = in.w;
  const int pad = (K - 1) / 2;
  if (l.relu) {
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (y[i] <= 0.0) gy[i] = 0.0;
    }
  }
  const double* kernel = p[0].data.data();
  double* dk = gp[0].data.data();
  double* db = gp[1].data.data();
  if (gx) gx->assign(x.size(), 0.0);
  for (int r = 0; r < H; ++r) {
    for (int q = 0; q < W; ++q) {
      const double* g = &gy[(static_cast<std::size_t>(r) * W + q) * F];
      bool any = false;
      for (int f = 0; f < F; ++f) {
        db[f] += g[f];
        any |= g[f] != 0.0;
      }
      if (!any) continue;
      for (int kr = 0; kr < K; ++kr) {
        const int rr = r + kr - pad;
        if (rr < 0 || rr >= H) continue;
        for (int kq = 0; kq < K; ++kq) {
          const int qq = q + kq - pad;
          if (qq < 0 || qq >= W) continue;
          const std::size_t xoff = (static_cast<std::size_t>(rr) * W + qq) * C;
          const std::size_t koff = static_cast<std::size_t>(kr * K + kq) * C * F;
          for (int ch = 0; ch < C; ++ch) {
            const double xv = x[xoff + ch];
            double* dkk = dk + koff + static_cast<std::size_t>(ch) * F;
            const double* kk = kernel + koff + static_cast<std::size_t>(ch) * F;
            double acc = 0.0;
            for (int f = 0; f < F; ++f) {
              dkk[f] += xv * g[f];
              acc += kk[f] * g[f];
            }
            if (gx) (*gx)[xoff + ch] += acc;
          }
        }
      }
    }
  }
}

void dense_forward(int out_dim, bool relu, const std::vector<Tensor>& p,
                   std::span<const double> x, std::vector<double>& y) {
  const double* w = p[0].data.data();
  y.assign(p[1].data.begin(), p[1].data.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xv = x[i];
    if (xv == 0.0) continue;
    const double* row = w + i * out_dim;
    for (int u = 0; u < out_dim; ++u) y[u] += xv * row[u];
  }
  if (relu) {
    for (auto& v : y) v = std::max(v, 0.0);
  }
}

void dense_backward(int out_dim, const std::vector<Tensor>& p, std::span<const double> x,
                    std::span<const double> g, std::vector<Tensor>& gp,
                    std::vector<double>* gx) {
  const double* w = p[0].data.data();
  double* dw = gp[0].data.data();
  double* db = gp[1].data.data();
  for (int u = 0; u < out_dim; ++u) db[u] += g[u];
  if (gx) gx->assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xv = x[i];
    const double* row = w + i * out_dim;
    double* drow = dw + i * out_dim;
    double acc = 0.0;
    for (int u = 0; u < out_dim; ++u) {
      drow[u] += xv * g[u];
      acc += row[u] * g[u];
    }
    if (gx) (*gx)[i] = acc;
  }
}

// aux layout per step t: [z | r | n | h], each of size D.
void gru_forward(int D, Shape3 in, const std::vector<Tensor>& p, std::span<const double> x,
                 std::vector<double>& y, std::vector<double>& aux) {
  const int T = in.c;
  const int M = in.h * in.w;
  const double* wx = p[0].data.data();
  const double* uh = p[1].data.data();
  const double* b = p[2].data.data();
  aux.assign(static_cast<std::size_t>(T) * 4 * D, 0.0);
  std::vector<double> pre(3 * D), hp(D, 0.0), rh(D);
  for (int t = 0; t < T; ++t) {
    std::copy(b, b + 3 * D, pre.begin());
    for (int j = 0; j < M; ++j) {
      const double xv = x[static_cast<std::size_t>(j) * T + t];
      if (xv == 0.0) continue;
      const double* row = wx + static_cast<std::size_t>(j) * 3 * D;
      for (int k = 0; k < 3 * D; ++k) pre[k] += xv * row[k];
    }
    for (int i = 0; i < D; ++i) {
      const double hv = hp[i];
      if (hv == 0.0) continue;
      const double* row = uh + static_cast<std::size_t>(i) * 3 * D;
      for (int k = 0; k < 2 * D; ++k) pre[k] += hv * row[k];
    }
    double* z = &aux[static_cast<std::size_t>(t) * 4 * D];
    double* r = z + D;
    double* n = r + D;
    double* h = n + D;
    for (int k = 0; k < D; ++k) {
      z[k] = sigmoid(pre[k]);
      r[k] = sigmoid(pre[D + k]);
      rh[k] = r[k] * hp[k];
    }
    for (int i = 0; i < D; ++i) {
      const double v = rh[i];
      if (v == 0.0) continue;
      const double* row = uh + static_cast<std::size_t>(i) * 3 * D + 2 * D;
      for (int k = 0; k < D; ++k) pre[2 * D + k] += v * row[k];
    }
    for (int k = 0; k < D; ++k) {
      n[k] = std::tanh(pre[2 * D + k]);
      h[k] = (1.0 - z[k]) * n[k] + z[k] * hp[k];
    }
    std::copy(h, h + D, hp.begin());
  }
  y.assign(hp.begin(), hp.end());
}

void gru_backward(int D, Shape3 in, const std::vector<Tensor>& p, std::span<const double> x,
                  const std::vector<double>& aux, std::span<const double> g,
                  std::vector<Tensor>& gp, std::vector<double>* gx) {
  const int T = in.c;
  const int M = in.h * in.w;
  const double* wx = p[0].data.data();
  const double* uh = p[1].data.data();
  double* dwx = gp[0].data.data();
  double* duh = gp[1].data.data();
  double* db = gp[2].data.data();
  if (gx) gx->assign(x.size(), 0.0);
  std::vector<double> gh(g.begin(), g.end()), dh(D), dpre(3 * D), drh(D);
  const std::vector<double> zeros(D, 0.0);
  for (int t = T - 1; t >= 0; --t) {
    const double* z = &aux[static_cast<std::size_t>(t) * 4 * D];
    const double* r = z + D;
    const double* n = r + D;
    const double* hp = t > 0 ? &aux[static_cast<std::size_t>(t - 1) * 4 * D + 3 * D] : zeros.data();
    for (int k = 0; k < D; ++k) {
      dpre[2 * D + k] = gh[k] * (1.0 - z[k]) * (1.0 - n[k] * n[k]);
      dpre[k] = gh[k] * (hp[k] - n[k]) * z[k] * (1.0 - z[k]);
      dh[k] = gh[k] * z[k];
    }
    // candidate path through r * h_prev
    for (int i = 0; i < D; ++i) {
      const double* row = uh + static_cast<std::size_t>(i) * 3 * D + 2 * D;
      double* drow = duh + static_cast<std::size_t>(i) * 3 * D + 2 * D;
      const double rhi = r[i] * hp[i];
      double acc = 0.0;
      for (int k = 0; k < D; ++k) {
        drow[k] += rhi * dpre[2 * D + k];
        acc += row[k] * dpre[2 * D + k];
      }
      drh[i] = acc;
    }
    for (int i = 0; i < D; ++i) {
      dpre[D + i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
      dh[i] += drh[i] * r[i];
    }
    // gate paths through U h_prev
    for (int i = 0; i < D; ++i) {
      const double* row = uh + static_cast<std::size_t>(i) * 3 * D;
      double* drow = duh + static_cast<std::size_t>(i) * 3 * D;
      double acc = 0.0;
      for (int k = 0; k < 2 * D; ++k) {
        drow[k] += hp[i] * dpre[k];
        acc += row[k] * dpre[k];
      }
      dh[i] += acc;
    }
    for (int k = 0; k < 3 * D; ++k) db[k] += dpre[k];
    for (int j = 0; j < M; ++j) {
      const std::size_t xi = static_cast<std::size_t>(j) * T + t;
      const double xv = x[xi];
      const double* row = wx + static_cast<std::size_t>(j) * 3 * D;
      double* drow = dwx + static_cast<std::size_t>(j) * 3 * D;
      double acc = 0.0;
      for (int k = 0; k < 3 * D; ++k) {
        drow[k] += xv * dpre[k];
        acc += row[k] * dpre[k];
      }
      if (gx) (*gx)[xi] = acc;
    }
    gh.swap(dh);
  }
}

}  // namespace

Network::Network(NetworkSpec spec, Shape3 input)
    : spec_(std::move(spec)), shapes_(infer_shapes(spec_, input)) {}

Trace Network::forward(const ParamStore& params, std::span<const double> x, DropoutMode mode,
                       Rng* rng) const {
  return forward_to(params, x, mode, rng, num_layers());
}

Trace Network::forward_to(const ParamStore& params, std::span<const double> x,
                          DropoutMode mode, Rng* rng, int last_tap) const {
  if (x.size() != shapes_[0].size()) {
    throw ShapeError("input: expected " + std::to_string(shapes_[0].size()) + " values (" +
                     to_string(shapes_[0]) + "), got " + std::to_string(x.size()));
  }
  if (params.layers.size() != spec_.layers.size()) {
    throw ShapeError("parameter store does not match the network");
  }
  const int L = std::min(last_tap, num_layers());
  Trace tr;
  tr.acts.resize(L + 1);
  tr.aux.resize(L);
  tr.argmax.resize(L);
  tr.acts[0].assign(x.begin(), x.end());
  for (int i = 0; i < L; ++i) {
    const auto& l = spec_.layers[i];
    const Shape3 in = shapes_[i];
    const Shape3 out = shapes_[i + 1];
    const auto& xin = tr.acts[i];
    auto& y = tr.acts[i + 1];
    const auto& p = params.layers[i];
    switch (l.kind) {
      case LayerKind::kConv:
        conv_forward(l, in, p, xin, y);
        break;
      case LayerKind::kMaxPool: {
        if (in == out) {
          y = xin;
          break;
        }
        y.assign(out.size(), 0.0);
        auto& arg = tr.argmax[i];
        arg.assign(out.size(), 0);
        for (int r = 0; r < out.h; ++r) {
          for (int q = 0; q < out.w; ++q) {
            for (int c = 0; c < in.c; ++c) {
              int best = -1;
              double bv = 0.0;
              for (int dr = 0; dr < 2; ++dr) {
                for (int dq = 0; dq < 2; ++dq) {
                  const int idx = ((2 * r + dr) * in.w + (2 * q + dq)) * in.c + c;
                  if (best < 0 || xin[idx] > bv) {
                    best = idx;
                    bv = xin[idx];
                  }
                }
              }
              const int o = (r * out.w + q) * out.c + c;
              y[o] = bv;
              arg[o] = best;
            }
          }
        }
        break;
      }
      case LayerKind::kRecurrent:
        gru_forward(l.state_dim, in, p, xin, y, tr.aux[i]);
        break;
      case LayerKind::kDense:
        dense_forward(l.units, l.relu, p, xin, y);
        break;
      case LayerKind::kSoftmax: {
        dense_forward(l.classes, false, p, xin, tr.aux[i]);
        const auto& logits = tr.aux[i];
        const double mx = *std::max_element(logits.begin(), logits.end());
        y.resize(logits.size());
        double total = 0.0;
        for (std::size_t k = 0; k < logits.size(); ++k) {
          y[k] = std::exp(logits[k] - mx);
          total += y[k];
        }
        for (auto& v : y) v /= total;
        break;
      }
      case LayerKind::kDropout: {
        y = xin;
        if (mode == DropoutMode::kSample && l.rate > 0.0) {
          if (!rng) throw ArgumentError("dropout sampling requires a random stream");
          auto& mask = tr.aux[i];
          mask.resize(y.size());
          const double keep = 1.0 / (1.0 - l.rate);
          for (std::size_t k = 0; k < y.size(); ++k) {
            mask[k] = uniform01(*rng) >= l.rate ? keep : 0.0;
            y[k] *= mask[k];
          }
        }
        break;
      }
      case LayerKind::kUpsample: {
        y.assign(out.size(), 0.0);
        for (int r = 0; r < out.h; ++r) {
          const int sr = std::min(r / 2, in.h - 1);
          for (int q = 0; q < out.w; ++q) {
            const int sq = std::min(q / 2, in.w - 1);
            for (int c = 0; c < out.c; ++c) {
              y[(r * out.w + q) * out.c + c] = xin[(sr * in.w + sq) * in.c + c];
            }
          }
        }
        break;
      }
      case LayerKind::kReshape:
        y = xin;
        break;
    }
  }
  return tr;
}

void Network::backward(const ParamStore& params, const Trace& tr, GradSeeds& seeds,
                       ParamStore& grads, int stop_layer, std::vector<double>* input_grad) const {
  const int L = static_cast<int>(tr.acts.size()) - 1;
  if (seeds.taps.size() < static_cast<std::size_t>(L + 1)) seeds.taps.resize(L + 1);
  if (input_grad && stop_layer != 0) {
    throw ArgumentError("input gradient requires a full backward pass");
  }
  std::vector<double> g;
  bool flowing = false;
  if (!seeds.taps[L].empty()) {
    g = seeds.taps[L];
    flowing = true;
  }
  std::vector<double> gx;
  for (int i = L - 1; i >= stop_layer; --i) {
    const auto& l = spec_.layers[i];
    const bool final_softmax = l.kind == LayerKind::kSoftmax && !seeds.logits.empty();
    if (!flowing && !final_softmax) {
      if (!seeds.taps[i].empty()) {
        g = seeds.taps[i];
        flowing = true;
      }
      continue;
    }
    const Shape3 in = shapes_[i];
    const Shape3 out = shapes_[i + 1];
    const auto& xin = tr.acts[i];
    const auto& y = tr.acts[i + 1];
    const auto& p = params.layers[i];
    auto& gp = grads.layers[i];
    const bool need_gx = i > stop_layer || (i == 0 && input_grad);
    std::vector<double>* gxp = need_gx ? &gx : nullptr;
    switch (l.kind) {
      case LayerKind::kConv:
        conv_backward(l, in, p, xin, y, g, gp, gxp);
        break;
      case LayerKind::kMaxPool:
        if (in == out) {
          gx = g;
        } else {
          gx.assign(in.size(), 0.0);
          const auto& arg = tr.argmax[i];
          for (std::size_t k = 0; k < g.size(); ++k) gx[arg[k]] += g[k];
        }
        break;
      case LayerKind::kRecurrent:
        gru_backward(l.state_dim, in, p, xin, tr.aux[i], g, gp, gxp);
        break;
      case LayerKind::kDense:
        if (l.relu) {
          for (std::size_t k = 0; k < g.size(); ++k) {
            if (y[k] <= 0.0) g[k] = 0.0;
          }
        }
        dense_backward(l.units, p, xin, g, gp, gxp);
        break;
      case LayerKind::kSoftmax: {
        std::vector<double> gl;
        if (final_softmax && i == L - 1) {
          gl = seeds.logits;
        } else {
          double dot = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) dot += y[k] * g[k];
          gl.resize(g.size());
          for (std::size_t k = 0; k < g.size(); ++k) gl[k] = y[k] * (g[k] - dot);
        }
        dense_backward(l.classes, p, xin, gl, gp, gxp);
        break;
      }
      case LayerKind::kDropout: {
        gx = g;
        const auto& mask = tr.aux[i];
        if (!mask.empty()) {
          for (std::size_t k = 0; k < gx.size(); ++k) gx[k] *= mask[k];
        }
        break;
      }
      case LayerKind::kUpsample:
        gx.assign(in.size(), 0.0);
        for (int r = 0; r < out.h; ++r) {
          const int sr = std::min(r / 2, in.h - 1);
          for (int q = 0; q < out.w; ++q) {
            const int sq = std::min(q / 2, in.w - 1);
            for (int c = 0; c < out.c; ++c) {
              gx[(sr * in.w + sq) * in.c + c] += g[(r * out.w + q) * out.c + c];
            }
          }
        }
        break;
      case LayerKind::kReshape:
        gx = g;
        break;
    }
    flowing = true;
    if (i == stop_layer && !need_gx) break;
    g.swap(gx);
    if (!seeds.taps[i].empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += seeds.taps[i][k];
    }
  }
  if (input_grad) {
    if (flowing) {
      *input_grad = g;
    } else {
      input_grad->assign(tr.acts[0].size(), 0.0);
    }
  }
}

std::vector<double> cross_entropy_logit_grad(std::span<const double> probs, int label_index) {
  std::vector<double> g(probs.begin(), probs.end());
  g[label_index] -= 1.0;
  return g;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace hsi
