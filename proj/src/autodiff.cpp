// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ambibin::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}

struct AxisSplit {
  int64_t outer, dim, inner;
};

AxisSplit split_axis(const std::vector<int64_t>& shape, int axis) {
  AxisSplit s{1, shape[axis], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

V Graph::input(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.requires = requires_grad;
  nodes_.push_back(std::move(n));
  return V{static_cast<int32_t>(nodes_.size() - 1)};
}

V Graph::emit(Tensor value, const std::vector<V>& parents, BackFn back) {
  Node n;
  n.value = std::move(value);
  for (V p : parents) {
    n.parents.push_back(p.i);
    if (nodes_[p.i].requires) n.requires = true;
  }
  if (n.requires) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return V{static_cast<int32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(int32_t i) {
  Node& n = nodes_[i];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

Tensor Graph::grad_of(V v) const {
  const Node& n = nodes_[v.i];
  if (n.grad_alloc) return n.grad;
  return Tensor::zeros(n.value.shape);
}

void Graph::backward(V scalar_loss) {
  const Node& loss = nodes_[scalar_loss.i];
  if (loss.value.numel() != 1)
    throw ShapeError("backward: target must be a scalar");
  for (auto& n : nodes_) {
    n.grad = Tensor();
    n.grad_alloc = false;
  }
  grad_buffer(scalar_loss.i).v[0] = 1.0;
  for (int32_t i = scalar_loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad_alloc || !n.back) continue;
    n.back(*this, i);
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <typename Fwd, typename Bwd>
V unary_elementwise(Graph& g, V a, Fwd fwd, Bwd bwd_factor) {
  const Tensor& x = g.val(a);
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out.v[i] = fwd(x.v[i]);
  return g.emit(std::move(out), {a}, [a, bwd_factor](Graph& gg, int32_t o) {
    if (!gg.node_requires(a.i)) return;
    const Tensor& go = gg.grad_at(o);
    const Tensor& x = gg.val(a);
    const Tensor& y = gg.value_at(o);
    Tensor& ga = gg.grad_buffer(a.i);
    for (int64_t i = 0; i < go.numel(); ++i)
      ga.v[i] += go.v[i] * bwd_factor(x.v[i], y.v[i]);
  });
}

}  // namespace

V add(Graph& g, V a, V b) {
  const Tensor& x = g.val(a);
  const Tensor& y = g.val(b);
  check_same_shape(x, y, "add");
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out.v[i] = x.v[i] + y.v[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    for (V p : {a, b}) {
      if (!gg.node_requires(p.i)) continue;
      Tensor& gp = gg.grad_buffer(p.i);
      for (int64_t i = 0; i < go.numel(); ++i) gp.v[i] += go.v[i];
    }
  });
}

V sub(Graph& g, V a, V b) {
  const Tensor& x = g.val(a);
  const Tensor& y = g.val(b);
  check_same_shape(x, y, "sub");
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out.v[i] = x.v[i] - y.v[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    if (gg.node_requires(a.i)) {
      Tensor& ga = gg.grad_buffer(a.i);
      for (int64_t i = 0; i < go.numel(); ++i) ga.v[i] += go.v[i];
    }
    if (gg.node_requires(b.i)) {
      Tensor& gb = gg.grad_buffer(b.i);
      for (int64_t i = 0; i < go.numel(); ++i) gb.v[i] -= go.v[i];
    }
  });
}

V mul(Graph& g, V a, V b) {
  const Tensor& x = g.val(a);
  const Tensor& y = g.val(b);
  check_same_shape(x, y, "mul");
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out.v[i] = x.v[i] * y.v[i];
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const Tensor& x = gg.val(a);
    const Tensor& y = gg.val(b);
    if (gg.node_requires(a.i)) {
      Tensor& ga = gg.grad_buffer(a.i);
      for (int64_t i = 0; i < go.numel(); ++i) ga.v[i] += go.v[i] * y.v[i];
    }
    if (gg.node_requires(b.i)) {
      Tensor& gb = gg.grad_buffer(b.i);
      for (int64_t i = 0; i < go.numel(); ++i) gb.v[i] += go.v[i] * x.v[i];
    }
  });
}

V scale(Graph& g, V a, double c) {
  return unary_elementwise(
      g, a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

V add_scalar(Graph& g, V a, double c) {
  return unary_elementwise(
      g, a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

V square(Graph& g, V a) {
  return unary_elementwise(
      g, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

V abs_val(Graph& g, V a) {
  return unary_elementwise(
      g, a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

V hypot_val(Graph& g, V a, V b) {
  const Tensor& x = g.val(a);
  const Tensor& y = g.val(b);
  check_same_shape(x, y, "hypot");
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i)
    out.v[i] = std::sqrt(x.v[i] * x.v[i] + y.v[i] * y.v[i]);
  return g.emit(std::move(out), {a, b}, [a, b](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const Tensor& r = gg.value_at(o);
    const Tensor& x = gg.val(a);
    const Tensor& y = gg.val(b);
    if (gg.node_requires(a.i)) {
      Tensor& ga = gg.grad_buffer(a.i);
      for (int64_t i = 0; i < go.numel(); ++i)
        if (r.v[i] > 0) ga.v[i] += go.v[i] * x.v[i] / r.v[i];
    }
    if (gg.node_requires(b.i)) {
      Tensor& gb = gg.grad_buffer(b.i);
      for (int64_t i = 0; i < go.numel(); ++i)
        if (r.v[i] > 0) gb.v[i] += go.v[i] * y.v[i] / r.v[i];
    }
  });
}

V sigmoid(Graph& g, V a) {
  return unary_elementwise(
      g, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

V tanh_val(Graph& g, V a) {
  return unary_elementwise(
      g, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

V leaky_relu(Graph& g, V a, double slope) {
  return unary_elementwise(
      g, a, [slope](double x) { return x >= 0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

V rsqrt_shifted(Graph& g, V a, double eps) {
  return unary_elementwise(
      g, a, [eps](double x) { return 1.0 / std::sqrt(x + eps); },
      [](double, double y) { return -0.5 * y * y * y; });
}

// ---------------------------------------------------------------------------
// structure

V reshape(Graph& g, V a, std::vector<int64_t> shape) {
  const Tensor& x = g.val(a);
  if (Tensor::numel_of(shape) != x.numel())
    throw ShapeError("reshape: element count mismatch");
  Tensor out(std::move(shape), x.v);
  return g.emit(std::move(out), {a}, [a](Graph& gg, int32_t o) {
    if (!gg.node_requires(a.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& ga = gg.grad_buffer(a.i);
    for (int64_t i = 0; i < go.numel(); ++i) ga.v[i] += go.v[i];
  });
}

V slice(Graph& g, V a, int axis, int64_t start, int64_t len) {
  const Tensor& x = g.val(a);
  const AxisSplit s = split_axis(x.shape, axis);
  if (start < 0 || start + len > s.dim) throw ShapeError("slice: out of range");
  std::vector<int64_t> oshape = x.shape;
  oshape[axis] = len;
  Tensor out(oshape);
  for (int64_t o = 0; o < s.outer; ++o)
    std::copy_n(x.data() + (o * s.dim + start) * s.inner, len * s.inner,
                out.data() + o * len * s.inner);
  return g.emit(std::move(out), {a},
                [a, axis, start, len, s](Graph& gg, int32_t o) {
    if (!gg.node_requires(a.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& ga = gg.grad_buffer(a.i);
    for (int64_t out_r = 0; out_r < s.outer; ++out_r) {
      const double* src = go.data() + out_r * len * s.inner;
      double* dst = ga.data() + (out_r * s.dim + start) * s.inner;
      for (int64_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
    }
  });
}

V concat(Graph& g, const std::vector<V>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  std::vector<int64_t> oshape = g.val(xs[0]).shape;
  int64_t total = 0;
  for (V x : xs) {
    const auto& sh = g.val(x).shape;
    if (sh.size() != oshape.size()) throw ShapeError("concat: rank mismatch");
    for (size_t d = 0; d < sh.size(); ++d)
      if (static_cast<int>(d) != axis && sh[d] != oshape[d])
        throw ShapeError("concat: off-axis dimension mismatch");
    total += sh[axis];
  }
  oshape[axis] = total;
  Tensor out(oshape);
  const AxisSplit s = split_axis(oshape, axis);
  std::vector<int64_t> offsets;  // along axis
  int64_t at = 0;
  for (V x : xs) {
    const Tensor& t = g.val(x);
    const int64_t d = t.shape[axis];
    for (int64_t o = 0; o < s.outer; ++o)
      std::copy_n(t.data() + o * d * s.inner, d * s.inner,
                  out.data() + (o * s.dim + at) * s.inner);
    offsets.push_back(at);
    at += d;
  }
  return g.emit(std::move(out), xs, [xs, axis, s, offsets](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    for (size_t k = 0; k < xs.size(); ++k) {
      if (!gg.node_requires(xs[k].i)) continue;
      Tensor& gx = gg.grad_buffer(xs[k].i);
      const int64_t d = gx.shape[axis];
      for (int64_t out_r = 0; out_r < s.outer; ++out_r) {
        const double* src = go.data() + (out_r * s.dim + offsets[k]) * s.inner;
        double* dst = gx.data() + out_r * d * s.inner;
        for (int64_t i = 0; i < d * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

V flip_axis0(Graph& g, V a) {
  const Tensor& x = g.val(a);
  const int64_t rows = x.shape[0];
  const int64_t rowlen = x.numel() / rows;
  Tensor out(x.shape);
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(x.data() + r * rowlen, rowlen,
                out.data() + (rows - 1 - r) * rowlen);
  return g.emit(std::move(out), {a}, [a, rows, rowlen](Graph& gg, int32_t o) {
    if (!gg.node_requires(a.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& ga = gg.grad_buffer(a.i);
    for (int64_t r = 0; r < rows; ++r) {
      const double* src = go.data() + (rows - 1 - r) * rowlen;
      double* dst = ga.data() + r * rowlen;
      for (int64_t i = 0; i < rowlen; ++i) dst[i] += src[i];
    }
  });
}

V mean_all(Graph& g, V a) {
  const Tensor& x = g.val(a);
  double sum = 0.0;
  for (double v : x.v) sum += v;
  Tensor out({1});
  out.v[0] = sum / x.numel();
  return g.emit(std::move(out), {a}, [a](Graph& gg, int32_t o) {
    if (!gg.node_requires(a.i)) return;
    const double go = gg.grad_at(o).v[0];
    Tensor& ga = gg.grad_buffer(a.i);
    const double f = go / ga.numel();
    for (auto& v : ga.v) v += f;
  });
}

// ---------------------------------------------------------------------------
// dense algebra

V matmul(Graph& g, V a, V b) {
  const Tensor& x = g.val(a);
  const Tensor& w = g.val(b);
  if (x.rank() != 2 || w.rank() != 2 || x.shape[1] != w.shape[0])
    throw ShapeError("matmul: incompatible shapes");
  const int64_t M = x.shape[0], K = x.shape[1], N = w.shape[1];
  Tensor out({M, N});
  Map(out.data(), M, N).noalias() = CMap(x.data(), M, K) * CMap(w.data(), K, N);
  return g.emit(std::move(out), {a, b}, [a, b, M, K, N](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    CMap gmap(go.data(), M, N);
    if (gg.node_requires(a.i)) {
      Tensor& ga = gg.grad_buffer(a.i);
      Map(ga.data(), M, K).noalias() += gmap * CMap(gg.val(b).data(), K, N).transpose();
    }
    if (gg.node_requires(b.i)) {
      Tensor& gb = gg.grad_buffer(b.i);
      Map(gb.data(), K, N).noalias() += CMap(gg.val(a).data(), M, K).transpose() * gmap;
    }
  });
}

V affine(Graph& g, V x, V w, V b) {
  const Tensor& xv = g.val(x);
  const Tensor& wv = g.val(w);
  const Tensor& bv = g.val(b);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.shape[1] != wv.shape[0] ||
      bv.numel() != wv.shape[1])
    throw ShapeError("affine: incompatible shapes");
  const int64_t M = xv.shape[0], K = xv.shape[1], N = wv.shape[1];
  Tensor out({M, N});
  Map om(out.data(), M, N);
  om.noalias() = CMap(xv.data(), M, K) * CMap(wv.data(), K, N);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), N);
  return g.emit(std::move(out), {x, w, b}, [x, w, b, M, K, N](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    CMap gmap(go.data(), M, N);
    if (gg.node_requires(x.i)) {
      Tensor& gx = gg.grad_buffer(x.i);
      Map(gx.data(), M, K).noalias() += gmap * CMap(gg.val(w).data(), K, N).transpose();
    }
    if (gg.node_requires(w.i)) {
      Tensor& gw = gg.grad_buffer(w.i);
      Map(gw.data(), K, N).noalias() += CMap(gg.val(x).data(), M, K).transpose() * gmap;
    }
    if (gg.node_requires(b.i)) {
      Tensor& gb = gg.grad_buffer(b.i);
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), N) += gmap.colwise().sum();
    }
  });
}

// ---------------------------------------------------------------------------
// spectral

V stft_op(Graph& g, V x, const StftConfig& cfg) {
  cfg.validate();
  const Tensor& xv = g.val(x);
  if (xv.rank() != 2) throw ShapeError("stft_op: expected [C, L]");
  const int64_t C = xv.shape[0], L = xv.shape[1];
  if (L < cfg.window_length) throw ShapeError("stft_op: signal shorter than one window");
  const int wl = cfg.window_length;
  const int pad = wl / 2;
  const int64_t T = cfg.frames_for(L);
  const int64_t F = cfg.freq_bins();
  const auto window = make_window(cfg.window, wl);
  Fft fft(cfg.fft_size);

  Tensor out({C, 2, T, F});
  std::vector<double> frame(cfg.fft_size);
  std::vector<std::complex<double>> spec(F);
  for (int64_t c = 0; c < C; ++c) {
    const double* sig = xv.data() + c * L;
    double* re = out.data() + c * 2 * T * F;
    double* im = re + T * F;
    for (int64_t t = 0; t < T; ++t) {
      const int64_t start = t * cfg.hop - pad;
      std::fill(frame.begin(), frame.end(), 0.0);
      for (int n = 0; n < wl; ++n) {
        const int64_t idx = start + n;
        if (idx >= 0 && idx < L) frame[n] = sig[idx] * window[n];
      }
      fft.rfft(frame.data(), spec.data());
      for (int64_t f = 0; f < F; ++f) {
        re[t * F + f] = spec[f].real();
        im[t * F + f] = spec[f].imag();
      }
    }
  }
  return g.emit(std::move(out), {x}, [x, cfg, C, L, T, F](Graph& gg, int32_t o) {
    if (!gg.node_requires(x.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& gx = gg.grad_buffer(x.i);
    const int wl = cfg.window_length;
    const int pad = wl / 2;
    const auto window = make_window(cfg.window, wl);
    Fft fft(cfg.fft_size);
    const int N = cfg.fft_size;
    std::vector<std::complex<double>> buf(N);
    for (int64_t c = 0; c < C; ++c) {
      const double* gre = go.data() + c * 2 * T * F;
      const double* gim = gre + T * F;
      double* gsig = gx.data() + c * L;
      for (int64_t t = 0; t < T; ++t) {
        // adjoint of the one-sided DFT rows: Re{ FFT_fwd(conj(gbar)) }
        std::fill(buf.begin(), buf.end(), std::complex<double>(0, 0));
        for (int64_t f = 0; f < F; ++f)
          buf[f] = {gre[t * F + f], -gim[t * F + f]};
        fft.transform(buf.data(), false);
        const int64_t start = t * cfg.hop - pad;
        for (int n = 0; n < wl; ++n) {
          const int64_t idx = start + n;
          if (idx >= 0 && idx < L) gsig[idx] += window[n] * buf[n].real();
        }
      }
    }
  });
}

V istft_op(Graph& g, V y, const StftConfig& cfg, int64_t out_len) {
  cfg.validate();
  const Tensor& yv = g.val(y);
  if (yv.rank() != 4 || yv.shape[1] != 2 || yv.shape[3] != cfg.freq_bins())
    throw ShapeError("istft_op: expected [C, 2, T, freq_bins]");
  const int64_t C = yv.shape[0], T = yv.shape[2], F = yv.shape[3];
  const int wl = cfg.window_length;
  const int pad = wl / 2;
  const auto window = make_window(cfg.window, wl);
  Fft fft(cfg.fft_size);

  const int64_t acc_len = (T - 1) * cfg.hop + wl;
  std::vector<double> weight(acc_len, 0.0);
  for (int64_t t = 0; t < T; ++t)
    for (int n = 0; n < wl; ++n) weight[t * cfg.hop + n] += window[n] * window[n];

  Tensor out({C, out_len});
  std::vector<double> acc(acc_len);
  std::vector<double> frame(cfg.fft_size);
  std::vector<std::complex<double>> spec(F);
  for (int64_t c = 0; c < C; ++c) {
    const double* re = yv.data() + c * 2 * T * F;
    const double* im = re + T * F;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t t = 0; t < T; ++t) {
      for (int64_t f = 0; f < F; ++f) spec[f] = {re[t * F + f], im[t * F + f]};
      fft.irfft(spec.data(), frame.data());
      for (int n = 0; n < wl; ++n) acc[t * cfg.hop + n] += frame[n] * window[n];
    }
    double* dst = out.data() + c * out_len;
    const int64_t copy_len = std::min<int64_t>(out_len, acc_len - pad);
    for (int64_t m = 0; m < copy_len; ++m) {
      const double den = weight[m + pad];
      dst[m] = den > 1e-12 ? acc[m + pad] / den : 0.0;
    }
  }
  return g.emit(std::move(out), {y},
                [y, cfg, C, T, F, out_len, acc_len](Graph& gg, int32_t o) {
    if (!gg.node_requires(y.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& gy = gg.grad_buffer(y.i);
    const int wl = cfg.window_length;
    const int pad = wl / 2;
    const int N = cfg.fft_size;
    const auto window = make_window(cfg.window, wl);
    Fft fft(N);
    std::vector<double> weight(acc_len, 0.0);
    for (int64_t t = 0; t < T; ++t)
      for (int n = 0; n < wl; ++n) weight[t * cfg.hop + n] += window[n] * window[n];
    std::vector<double> ubar(acc_len);
    std::vector<double> sbar(N);
    std::vector<std::complex<double>> spec(F);
    for (int64_t c = 0; c < C; ++c) {
      std::fill(ubar.begin(), ubar.end(), 0.0);
      const double* gout = go.data() + c * out_len;
      const int64_t copy_len = std::min<int64_t>(out_len, acc_len - pad);
      for (int64_t m = 0; m < copy_len; ++m) {
        const double den = weight[m + pad];
        if (den > 1e-12) ubar[m + pad] = gout[m] / den;
      }
      double* gre = gy.data() + c * 2 * T * F;
      double* gim = gre + T * F;
      for (int64_t t = 0; t < T; ++t) {
        std::fill(sbar.begin(), sbar.end(), 0.0);
        for (int n = 0; n < wl; ++n) sbar[n] = window[n] * ubar[t * cfg.hop + n];
        fft.rfft(sbar.data(), spec.data());
        for (int64_t f = 0; f < F; ++f) {
          const double cf = (f == 0 || f == N / 2) ? 1.0 : 2.0;
          gre[t * F + f] += cf / N * spec[f].real();
          gim[t * F + f] += cf / N * spec[f].imag();
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolutional

namespace {

void im2col(const double* x, int64_t C, int64_t H, int64_t W, int k, int pad,
            int64_t Ho, int64_t Wo, double* cols) {
  // cols: [C*k*k, Ho*Wo]
  for (int64_t c = 0; c < C; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t src_i = i + ki - pad;
          for (int64_t j = 0; j < Wo; ++j) {
            const int64_t src_j = j + kj - pad;
            row[i * Wo + j] =
                (src_i >= 0 && src_i < H && src_j >= 0 && src_j < W)
                    ? x[(c * H + src_i) * W + src_j]
                    : 0.0;
          }
        }
      }
}

void col2im_accum(const double* cols, int64_t C, int64_t H, int64_t W, int k,
                  int pad, int64_t Ho, int64_t Wo, double* x) {
  for (int64_t c = 0; c < C; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t dst_i = i + ki - pad;
          if (dst_i < 0 || dst_i >= H) continue;
          for (int64_t j = 0; j < Wo; ++j) {
            const int64_t dst_j = j + kj - pad;
            if (dst_j < 0 || dst_j >= W) continue;
            x[(c * H + dst_i) * W + dst_j] += row[i * Wo + j];
          }
        }
      }
}

}  // namespace

V conv2d(Graph& g, V x, V w, V b, int pad) {
  const Tensor& xv = g.val(x);
  const Tensor& wv = g.val(w);
  const Tensor& bv = g.val(b);
  if (xv.rank() != 4 || wv.rank() != 4 || xv.shape[1] != wv.shape[1])
    throw ShapeError("conv2d: incompatible shapes");
  const int64_t Nn = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const int64_t Fo = wv.shape[0];
  const int k = static_cast<int>(wv.shape[2]);
  if (wv.shape[3] != k || bv.numel() != Fo) throw ShapeError("conv2d: bad kernel/bias");
  const int64_t Ho = H + 2 * pad - k + 1;
  const int64_t Wo = W + 2 * pad - k + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

  Tensor out({Nn, Fo, Ho, Wo});
  const int64_t ck2 = C * k * k;
  std::vector<double> cols(static_cast<size_t>(ck2) * Ho * Wo);
  for (int64_t n = 0; n < Nn; ++n) {
    im2col(xv.data() + n * C * H * W, C, H, W, k, pad, Ho, Wo, cols.data());
    Map(out.data() + n * Fo * Ho * Wo, Fo, Ho * Wo).noalias() =
        CMap(wv.data(), Fo, ck2) * CMap(cols.data(), ck2, Ho * Wo);
    for (int64_t f = 0; f < Fo; ++f) {
      double* plane = out.data() + (n * Fo + f) * Ho * Wo;
      const double bias = bv.v[f];
      for (int64_t i = 0; i < Ho * Wo; ++i) plane[i] += bias;
    }
  }
  return g.emit(std::move(out), {x, w, b},
                [x, w, b, pad, Nn, C, H, W, Fo, k, Ho, Wo](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const int64_t ck2 = C * k * k;
    std::vector<double> cols(static_cast<size_t>(ck2) * Ho * Wo);
    const bool need_x = gg.node_requires(x.i);
    const bool need_w = gg.node_requires(w.i);
    const bool need_b = gg.node_requires(b.i);
    for (int64_t n = 0; n < Nn; ++n) {
      CMap gmap(go.data() + n * Fo * Ho * Wo, Fo, Ho * Wo);
      if (need_b) {
        Tensor& gb = gg.grad_buffer(b.i);
        for (int64_t f = 0; f < Fo; ++f) gb.v[f] += gmap.row(f).sum();
      }
      if (need_w) {
        im2col(gg.val(x).data() + n * C * H * W, C, H, W, k, pad, Ho, Wo, cols.data());
        Tensor& gw = gg.grad_buffer(w.i);
        Map(gw.data(), Fo, ck2).noalias() +=
            gmap * CMap(cols.data(), ck2, Ho * Wo).transpose();
      }
      if (need_x) {
        Map(cols.data(), ck2, Ho * Wo).noalias() =
            CMap(gg.val(w).data(), Fo, ck2).transpose() * gmap;
        Tensor& gx = gg.grad_buffer(x.i);
        col2im_accum(cols.data(), C, H, W, k, pad, Ho, Wo, gx.data() + n * C * H * W);
      }
    }
  });
}

V conv_transpose2d(Graph& g, V x, V w, V b, int s) {
  const Tensor& xv = g.val(x);
  const Tensor& wv = g.val(w);
  const Tensor& bv = g.val(b);
  if (xv.rank() != 4 || wv.rank() != 4 || xv.shape[1] != wv.shape[0] ||
      wv.shape[2] != s || wv.shape[3] != s)
    throw ShapeError("conv_transpose2d: incompatible shapes (kernel must equal stride)");
  const int64_t Nn = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const int64_t Fo = wv.shape[1];
  if (bv.numel() != Fo) throw ShapeError("conv_transpose2d: bad bias");
  const int64_t Ho = H * s, Wo = W * s;

  // kernel == stride: output patches are disjoint, one GEMM per sample.
  Tensor out({Nn, Fo, Ho, Wo});
  const int64_t fss = Fo * s * s;
  std::vector<double> prod(static_cast<size_t>(fss) * H * W);
  for (int64_t n = 0; n < Nn; ++n) {
    Map(prod.data(), fss, H * W).noalias() =
        CMap(wv.data(), C, fss).transpose() * CMap(xv.data() + n * C * H * W, C, H * W);
    for (int64_t f = 0; f < Fo; ++f) {
      const double bias = bv.v[f];
      for (int64_t i = 0; i < H; ++i)
        for (int di = 0; di < s; ++di)
          for (int64_t j = 0; j < W; ++j)
            for (int dj = 0; dj < s; ++dj)
              out.data()[((n * Fo + f) * Ho + i * s + di) * Wo + j * s + dj] =
                  prod[(((f * s + di) * s + dj) * H + i) * W + j] + bias;
    }
  }
  return g.emit(std::move(out), {x, w, b},
                [x, w, b, s, Nn, C, H, W, Fo, Ho, Wo](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const int64_t fss = Fo * s * s;
    std::vector<double> gprod(static_cast<size_t>(fss) * H * W);
    const bool need_x = gg.node_requires(x.i);
    const bool need_w = gg.node_requires(w.i);
    const bool need_b = gg.node_requires(b.i);
    for (int64_t n = 0; n < Nn; ++n) {
      // gather back into the [F*s*s, H*W] layout
      for (int64_t f = 0; f < Fo; ++f)
        for (int64_t i = 0; i < H; ++i)
          for (int di = 0; di < s; ++di)
            for (int64_t j = 0; j < W; ++j)
              for (int dj = 0; dj < s; ++dj)
                gprod[(((f * s + di) * s + dj) * H + i) * W + j] =
                    go.data()[((n * Fo + f) * Ho + i * s + di) * Wo + j * s + dj];
      if (need_b) {
        Tensor& gb = gg.grad_buffer(b.i);
        for (int64_t f = 0; f < Fo; ++f) {
          const double* plane = go.data() + (n * Fo + f) * Ho * Wo;
          double sum = 0.0;
          for (int64_t i = 0; i < Ho * Wo; ++i) sum += plane[i];
          gb.v[f] += sum;
        }
      }
      if (need_x) {
        Tensor& gx = gg.grad_buffer(x.i);
        Map(gx.data() + n * C * H * W, C, H * W).noalias() +=
            CMap(gg.val(w).data(), C, fss) * CMap(gprod.data(), fss, H * W);
      }
      if (need_w) {
        Tensor& gw = gg.grad_buffer(w.i);
        Map(gw.data(), C, fss).noalias() +=
            CMap(gg.val(x).data() + n * C * H * W, C, H * W) *
            CMap(gprod.data(), fss, H * W).transpose();
      }
    }
  });
}

V avg_pool2d(Graph& g, V x, int s) {
  const Tensor& xv = g.val(x);
  if (xv.rank() != 4) throw ShapeError("avg_pool2d: expected [N,C,H,W]");
  const int64_t Nn = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  if (H % s != 0 || W % s != 0)
    throw ShapeError("avg_pool2d: dimensions must be divisible by the pool size");
  const int64_t Ho = H / s, Wo = W / s;
  Tensor out({Nn, C, Ho, Wo});
  const double inv = 1.0 / (s * s);
  for (int64_t nc = 0; nc < Nn * C; ++nc) {
    const double* src = xv.data() + nc * H * W;
    double* dst = out.data() + nc * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        double sum = 0.0;
        for (int di = 0; di < s; ++di)
          for (int dj = 0; dj < s; ++dj)
            sum += src[(i * s + di) * W + j * s + dj];
        dst[i * Wo + j] = sum * inv;
      }
  }
  return g.emit(std::move(out), {x}, [x, s, Nn, C, H, W, Ho, Wo](Graph& gg, int32_t o) {
    if (!gg.node_requires(x.i)) return;
    const Tensor& go = gg.grad_at(o);
    Tensor& gx = gg.grad_buffer(x.i);
    const double inv = 1.0 / (s * s);
    for (int64_t nc = 0; nc < Nn * C; ++nc) {
      const double* src = go.data() + nc * Ho * Wo;
      double* dst = gx.data() + nc * H * W;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          const double gval = src[i * Wo + j] * inv;
          for (int di = 0; di < s; ++di)
            for (int dj = 0; dj < s; ++dj)
              dst[(i * s + di) * W + j * s + dj] += gval;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// batch norm

BatchNormOut batchnorm_train(Graph& g, V x, V gamma, V beta, double eps) {
  const Tensor& xv = g.val(x);
  if (xv.rank() != 4) throw ShapeError("batchnorm: expected [N,C,H,W]");
  const int64_t Nn = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const int64_t M = Nn * H * W;
  Tensor mean({C}), var({C});
  for (int64_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int64_t n = 0; n < Nn; ++n) {
      const double* p = xv.data() + (n * C + c) * H * W;
      for (int64_t i = 0; i < H * W; ++i) sum += p[i];
    }
    const double mu = sum / M;
    double sq = 0.0;
    for (int64_t n = 0; n < Nn; ++n) {
      const double* p = xv.data() + (n * C + c) * H * W;
      for (int64_t i = 0; i < H * W; ++i) sq += (p[i] - mu) * (p[i] - mu);
    }
    mean.v[c] = mu;
    var.v[c] = sq / M;
  }
  const Tensor& gv = g.val(gamma);
  const Tensor& bv = g.val(beta);
  if (gv.numel() != C || bv.numel() != C) throw ShapeError("batchnorm: bad affine shapes");
  Tensor out(xv.shape);
  for (int64_t c = 0; c < C; ++c) {
    const double istd = 1.0 / std::sqrt(var.v[c] + eps);
    const double ga = gv.v[c], be = bv.v[c], mu = mean.v[c];
    for (int64_t n = 0; n < Nn; ++n) {
      const double* p = xv.data() + (n * C + c) * H * W;
      double* q = out.data() + (n * C + c) * H * W;
      for (int64_t i = 0; i < H * W; ++i) q[i] = ga * (p[i] - mu) * istd + be;
    }
  }
  Tensor mean_copy = mean, var_copy = var;
  V y = g.emit(std::move(out), {x, gamma, beta},
               [x, gamma, beta, eps, Nn, C, H, W, M, mean, var](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const Tensor& xv = gg.val(x);
    const Tensor& gv = gg.val(gamma);
    for (int64_t c = 0; c < C; ++c) {
      const double istd = 1.0 / std::sqrt(var.v[c] + eps);
      const double mu = mean.v[c];
      // per-channel sums over N*H*W
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t n = 0; n < Nn; ++n) {
        const double* gp = go.data() + (n * C + c) * H * W;
        const double* xp = xv.data() + (n * C + c) * H * W;
        for (int64_t i = 0; i < H * W; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - mu) * istd;
        }
      }
      if (gg.node_requires(beta.i)) gg.grad_buffer(beta.i).v[c] += sum_g;
      if (gg.node_requires(gamma.i)) gg.grad_buffer(gamma.i).v[c] += sum_gx;
      if (gg.node_requires(x.i)) {
        Tensor& gx = gg.grad_buffer(x.i);
        const double k = gv.v[c] * istd;
        const double mg = sum_g / M;
        const double mgx = sum_gx / M;
        for (int64_t n = 0; n < Nn; ++n) {
          const double* gp = go.data() + (n * C + c) * H * W;
          const double* xp = xv.data() + (n * C + c) * H * W;
          double* dst = gx.data() + (n * C + c) * H * W;
          for (int64_t i = 0; i < H * W; ++i) {
            const double xhat = (xp[i] - mu) * istd;
            dst[i] += k * (gp[i] - mg - xhat * mgx);
          }
        }
      }
    }
  });
  return {y, std::move(mean_copy), std::move(var_copy)};
}

V batchnorm_infer(Graph& g, V x, V gamma, V beta, const Tensor& running_mean,
                  const Tensor& running_var, double eps) {
  const Tensor& xv = g.val(x);
  if (xv.rank() != 4) throw ShapeError("batchnorm: expected [N,C,H,W]");
  const int64_t Nn = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const Tensor& gv = g.val(gamma);
  const Tensor& bv = g.val(beta);
  Tensor out(xv.shape);
  for (int64_t c = 0; c < C; ++c) {
    const double istd = 1.0 / std::sqrt(running_var.v[c] + eps);
    const double ga = gv.v[c], be = bv.v[c], mu = running_mean.v[c];
    for (int64_t n = 0; n < Nn; ++n) {
      const double* p = xv.data() + (n * C + c) * H * W;
      double* q = out.data() + (n * C + c) * H * W;
      for (int64_t i = 0; i < H * W; ++i) q[i] = ga * (p[i] - mu) * istd + be;
    }
  }
  Tensor rv = running_var, rm = running_mean;
  return g.emit(std::move(out), {x, gamma, beta},
                [x, gamma, beta, eps, Nn, C, H, W, rm, rv](Graph& gg, int32_t o) {
    const Tensor& go = gg.grad_at(o);
    const Tensor& xv = gg.val(x);
    const Tensor& gv = gg.val(gamma);
    for (int64_t c = 0; c < C; ++c) {
      const double istd = 1.0 / std::sqrt(rv.v[c] + eps);
      for (int64_t n = 0; n < Nn; ++n) {
        const double* gp = go.data() + (n * C + c) * H * W;
        const double* xp = xv.data() + (n * C + c) * H * W;
        if (gg.node_requires(x.i)) {
          double* dst = gg.grad_buffer(x.i).data() + (n * C + c) * H * W;
          const double k = gv.v[c] * istd;
          for (int64_t i = 0; i < H * W; ++i) dst[i] += k * gp[i];
        }
        if (gg.node_requires(gamma.i) || gg.node_requires(beta.i)) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < H * W; ++i) {
            sum_g += gp[i];
            sum_gx += gp[i] * (xp[i] - rm.v[c]) * istd;
          }
          if (gg.node_requires(beta.i)) gg.grad_buffer(beta.i).v[c] += sum_g;
          if (gg.node_requires(gamma.i)) gg.grad_buffer(gamma.i).v[c] += sum_gx;
        }
      }
    }
  });
}

}  // namespace ambibin::ad
