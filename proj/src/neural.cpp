// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/neural.hpp"

#include <cmath>

namespace ambibin {

namespace {
using ad::Graph;
using ad::V;
}  // namespace

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::dnn4: return "dnn4";
    case Architecture::gru4: return "gru4";
    case Architecture::unet: return "unet";
  }
  throw Error("unknown architecture");
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "dnn4") return Architecture::dnn4;
  if (s == "gru4") return Architecture::gru4;
  if (s == "unet") return Architecture::unet;
  throw Error("unknown architecture: " + s);
}

void ModelSpec::validate() const {
  if (input_planes < 1 || freq_bins < 1)
    throw ShapeError("ModelSpec: input_planes and freq_bins must be positive");
  switch (architecture) {
    case Architecture::dnn4:
      if (dnn_hidden.empty()) throw ShapeError("ModelSpec: dnn needs hidden layers");
      break;
    case Architecture::gru4:
      if (gru_hidden < 1 || gru_layers < 1)
        throw ShapeError("ModelSpec: bad gru dimensions");
      break;
    case Architecture::unet:
      if (unet_channels.empty()) throw ShapeError("ModelSpec: unet needs channels");
      if (unet_pool < 2) throw ShapeError("ModelSpec: unet pool must be >= 2");
      if (unet_kernel % 2 != 1) throw ShapeError("ModelSpec: unet kernel must be odd");
      break;
  }
}

int Parameters::find(const std::string& name) const {
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].name == name) return static_cast<int>(i);
  return -1;
}

Tensor& Parameters::get(const std::string& name) {
  const int i = find(name);
  if (i < 0) throw Error("Parameters: missing tensor " + name);
  return items[i].value;
}

const Tensor& Parameters::get(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw Error("Parameters: missing tensor " + name);
  return items[i].value;
}

int64_t Parameters::trainable_count() const {
  int64_t n = 0;
  for (const auto& it : items)
    if (it.trainable) n += it.value.numel();
  return n;
}

namespace {

void push_bn(std::vector<ParamDef>& defs, const std::string& prefix, int64_t c) {
  defs.push_back({prefix + ".gamma", {c}, -1, true});
  defs.push_back({prefix + ".beta", {c}, 0, true});
  defs.push_back({prefix + ".rmean", {c}, 0, false});
  defs.push_back({prefix + ".rvar", {c}, -1, false});
}

void push_conv_block(std::vector<ParamDef>& defs, const std::string& prefix,
                     int64_t c_in, int64_t c_out, int k) {
  defs.push_back({prefix + ".conv0.w", {c_out, c_in, k, k}, c_in * k * k, true});
  defs.push_back({prefix + ".conv0.b", {c_out}, 0, true});
  push_bn(defs, prefix + ".bn0", c_out);
  defs.push_back({prefix + ".conv1.w", {c_out, c_out, k, k}, c_out * k * k, true});
  defs.push_back({prefix + ".conv1.b", {c_out}, 0, true});
  push_bn(defs, prefix + ".bn1", c_out);
}

}  // namespace

std::vector<ParamDef> param_table(const ModelSpec& spec) {
  spec.validate();
  std::vector<ParamDef> defs;
  const int64_t F = spec.freq_bins;
  const int64_t in = static_cast<int64_t>(spec.input_planes) * F;
  const int64_t out = static_cast<int64_t>(spec.output_planes()) * F;
  switch (spec.architecture) {
    case Architecture::dnn4: {
      int64_t prev = in;
      for (size_t j = 0; j < spec.dnn_hidden.size(); ++j) {
        const int64_t h = spec.dnn_hidden[j];
        defs.push_back({"dnn.fc" + std::to_string(j) + ".w", {prev, h}, prev, true});
        defs.push_back({"dnn.fc" + std::to_string(j) + ".b", {h}, 0, true});
        prev = h;
      }
      defs.push_back({"dnn.head.w", {prev, out}, prev, true});
      defs.push_back({"dnn.head.b", {out}, 0, true});
      break;
    }
    case Architecture::gru4: {
      const int64_t H = spec.gru_hidden;
      int64_t input_dim = in;
      for (int l = 0; l < spec.gru_layers; ++l) {
        for (const char* d : {"f", "b"}) {
          const std::string p = "gru" + std::to_string(l) + "." + d;
          defs.push_back({p + ".w_ih", {input_dim, 3 * H}, input_dim, true});
          defs.push_back({p + ".w_hh", {H, 3 * H}, H, true});
          defs.push_back({p + ".b_ih", {3 * H}, 0, true});
          defs.push_back({p + ".b_hh", {3 * H}, 0, true});
        }
        input_dim = 2 * H;
      }
      defs.push_back({"gru.head.w", {2 * H, out}, 2 * H, true});
      defs.push_back({"gru.head.b", {out}, 0, true});
      break;
    }
    case Architecture::unet: {
      const int k = spec.unet_kernel;
      const int s = spec.unet_pool;
      const int depth = spec.unet_depth();
      int64_t c_prev = spec.input_planes;
      for (int i = 0; i < depth; ++i) {
        const int64_t e = spec.unet_channels[i];
        push_conv_block(defs, "enc" + std::to_string(i), c_prev, e, k);
        c_prev = e;
      }
      for (int i = depth - 1; i >= 0; --i) {
        const int64_t e = spec.unet_channels[i];
        const std::string p = "dec" + std::to_string(i);
        defs.push_back({p + ".up.w", {c_prev, e, s, s}, c_prev, true});
        defs.push_back({p + ".up.b", {e}, 0, true});
        push_conv_block(defs, p, 2 * e, e, k);
        c_prev = e;
      }
      push_conv_block(defs, "final", c_prev, c_prev, k);
      defs.push_back({"unet.head.w", {6, c_prev, 1, 1}, c_prev, true});
      defs.push_back({"unet.head.b", {6}, 0, true});
      break;
    }
  }
  return defs;
}

Parameters init_params(const ModelSpec& spec, uint64_t seed) {
  Parameters params;
  params.seed = seed;
  Rng rng(seed);
  for (const auto& def : param_table(spec)) {
    NamedTensor nt;
    nt.name = def.name;
    nt.trainable = def.trainable;
    nt.value = Tensor(def.shape);
    if (def.fan_in > 0) {
      const double bound = std::sqrt(1.0 / static_cast<double>(def.fan_in));
      for (auto& v : nt.value.v) v = rng.uniform(-bound, bound);
    } else if (def.fan_in < 0) {
      std::fill(nt.value.v.begin(), nt.value.v.end(), 1.0);
    }
    params.items.push_back(std::move(nt));
  }
  return params;
}

bool all_finite(const Tensor& t) {
  for (double v : t.v)
    if (!std::isfinite(v)) return false;
  return true;
}

void MaskTriplet::validate() const {
  if (!mask.same_shape(cos_phase) || !mask.same_shape(sin_phase))
    throw ShapeError("MaskTriplet: shape mismatch");
  if (mask.rank() != 3 || mask.dim(0) != 2)
    throw ShapeError("MaskTriplet: expected [2, T, F]");
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (!(mask.v[i] >= 0.0 && mask.v[i] <= 1.0))
      throw NumericError("MaskTriplet: mask outside [0,1]");
    const double n = cos_phase.v[i] * cos_phase.v[i] + sin_phase.v[i] * sin_phase.v[i];
    if (!(n <= 1.0 + 1e-6)) throw NumericError("MaskTriplet: phase not unit-bounded");
  }
}

// ---------------------------------------------------------------------------
// graph construction

namespace {

struct LeafCtx {
  const Parameters& params;
  Graph& g;
  bool with_grad;
  std::vector<V>& leaves;

  V leaf(const std::string& name) {
    const int idx = params.find(name);
    if (idx < 0) throw Error("forward: missing parameter " + name);
    if (!leaves[idx].valid())
      leaves[idx] = g.input(params.items[idx].value,
                            with_grad && params.items[idx].trainable);
    return leaves[idx];
  }
  const Tensor& raw(const std::string& name) const { return params.get(name); }
};

// [P, T, F] planes -> frame-major [T, P*F]
Tensor frame_major(const InputFeature& f) {
  const int64_t P = f.plane_count(), T = f.frames(), F = f.freq_bins();
  Tensor out({T, P * F});
  for (int64_t p = 0; p < P; ++p)
    for (int64_t t = 0; t < T; ++t)
      std::copy_n(f.planes.data() + (p * T + t) * F, F,
                  out.data() + t * P * F + p * F);
  return out;
}

// Shared bounded head from six [1, T, F] raw planes.
HeadNodes make_head(Graph& g, const ModelSpec& spec, V mask_l, V mask_r, V cos_l,
                    V cos_r, V sin_l, V sin_r) {
  V mask_raw = ad::concat(g, {mask_l, mask_r}, 0);
  V cos_raw = ad::concat(g, {cos_l, cos_r}, 0);
  V sin_raw = ad::concat(g, {sin_l, sin_r}, 0);
  V mask = ad::sigmoid(g, mask_raw);
  V c0 = ad::tanh_val(g, cos_raw);
  V s0 = ad::tanh_val(g, sin_raw);
  V inv_norm = ad::rsqrt_shifted(
      g, ad::add(g, ad::square(g, c0), ad::square(g, s0)), spec.head_eps);
  return {mask, ad::mul(g, c0, inv_norm), ad::mul(g, s0, inv_norm)};
}

// Head from a per-frame [T, 6F] projection; column blocks are
// [mask_l, mask_r, cos_l, cos_r, sin_l, sin_r].
HeadNodes head_from_frames(Graph& g, const ModelSpec& spec, V out, int64_t T,
                           int64_t F) {
  auto plane = [&](int k) {
    return ad::reshape(g, ad::slice(g, out, 1, k * F, F), {1, T, F});
  };
  return make_head(g, spec, plane(0), plane(1), plane(2), plane(3), plane(4),
                   plane(5));
}

V gru_direction(Graph& g, LeafCtx& ctx, const std::string& prefix, V x,
                int64_t H) {
  V gi = ad::affine(g, x, ctx.leaf(prefix + ".w_ih"), ctx.leaf(prefix + ".b_ih"));
  const int64_t T = g.val(x).shape[0];
  V w_hh = ctx.leaf(prefix + ".w_hh");
  V b_hh = ctx.leaf(prefix + ".b_hh");
  V h = g.input(Tensor({1, H}), false);
  std::vector<V> hs;
  hs.reserve(T);
  for (int64_t t = 0; t < T; ++t) {
    V gi_t = ad::slice(g, gi, 0, t, 1);
    V gh = ad::affine(g, h, w_hh, b_hh);
    V r = ad::sigmoid(g, ad::add(g, ad::slice(g, gi_t, 1, 0, H),
                                 ad::slice(g, gh, 1, 0, H)));
    V z = ad::sigmoid(g, ad::add(g, ad::slice(g, gi_t, 1, H, H),
                                 ad::slice(g, gh, 1, H, H)));
    V n = ad::tanh_val(
        g, ad::add(g, ad::slice(g, gi_t, 1, 2 * H, H),
                   ad::mul(g, r, ad::slice(g, gh, 1, 2 * H, H))));
    // h = (1 - z) * n + z * h_prev
    h = ad::add(g, n, ad::mul(g, z, ad::sub(g, h, n)));
    hs.push_back(h);
  }
  return ad::concat(g, hs, 0);  // [T, H]
}

V unet_conv_block(Graph& g, LeafCtx& ctx, const ModelSpec& spec,
                  const std::string& prefix, V x, EvalMode mode,
                  std::vector<BatchStat>* stats) {
  const int pad = (spec.unet_kernel - 1) / 2;
  for (int j = 0; j < 2; ++j) {
    const std::string conv = prefix + ".conv" + std::to_string(j);
    const std::string bn = prefix + ".bn" + std::to_string(j);
    x = ad::conv2d(g, x, ctx.leaf(conv + ".w"), ctx.leaf(conv + ".b"), pad);
    if (mode == EvalMode::training) {
      auto r = ad::batchnorm_train(g, x, ctx.leaf(bn + ".gamma"),
                                   ctx.leaf(bn + ".beta"), spec.bn_eps);
      x = r.y;
      if (stats) {
        const auto& sh = g.val(x).shape;
        stats->push_back({bn, std::move(r.batch_mean), std::move(r.batch_var),
                          sh[0] * sh[2] * sh[3]});
      }
    } else {
      x = ad::batchnorm_infer(g, x, ctx.leaf(bn + ".gamma"),
                              ctx.leaf(bn + ".beta"), ctx.raw(bn + ".rmean"),
                              ctx.raw(bn + ".rvar"), spec.bn_eps);
    }
    x = ad::leaky_relu(g, x, spec.leaky_slope);
  }
  return x;
}

int64_t round_up(int64_t n, int64_t m) { return (n + m - 1) / m * m; }

}  // namespace

void build_forward(ForwardGraph& fg, const ModelSpec& spec,
                   const Parameters& params,
                   const std::vector<const InputFeature*>& batch, EvalMode mode,
                   bool with_grad) {
  spec.validate();
  if (batch.empty()) throw ShapeError("forward: empty batch");
  const int64_t T = batch[0]->frames();
  const int64_t F = batch[0]->freq_bins();
  for (const auto* f : batch) {
    if (f->plane_count() != spec.input_planes)
      throw ShapeError("forward: feature plane count does not match model spec");
    if (f->freq_bins() != spec.freq_bins)
      throw ShapeError("forward: feature freq_bins does not match model spec");
    if (f->frames() != T || f->freq_bins() != F)
      throw ShapeError("forward: batch features must share dimensions");
  }

  Graph& g = fg.graph;
  fg.param_leaves.assign(params.items.size(), V{});
  LeafCtx ctx{params, g, with_grad, fg.param_leaves};

  switch (spec.architecture) {
    case Architecture::dnn4: {
      for (const auto* f : batch) {
        V x = g.input(frame_major(*f), false);
        for (size_t j = 0; j < spec.dnn_hidden.size(); ++j) {
          const std::string p = "dnn.fc" + std::to_string(j);
          x = ad::affine(g, x, ctx.leaf(p + ".w"), ctx.leaf(p + ".b"));
          x = ad::leaky_relu(g, x, spec.leaky_slope);
        }
        V out = ad::affine(g, x, ctx.leaf("dnn.head.w"), ctx.leaf("dnn.head.b"));
        fg.heads.push_back(head_from_frames(g, spec, out, T, F));
      }
      break;
    }
    case Architecture::gru4: {
      const int64_t H = spec.gru_hidden;
      for (const auto* f : batch) {
        V x = g.input(frame_major(*f), false);
        for (int l = 0; l < spec.gru_layers; ++l) {
          const std::string p = "gru" + std::to_string(l);
          V fwd = gru_direction(g, ctx, p + ".f", x, H);
          V rev = ad::flip_axis0(
              g, gru_direction(g, ctx, p + ".b", ad::flip_axis0(g, x), H));
          x = ad::concat(g, {fwd, rev}, 1);
        }
        V out = ad::affine(g, x, ctx.leaf("gru.head.w"), ctx.leaf("gru.head.b"));
        fg.heads.push_back(head_from_frames(g, spec, out, T, F));
      }
      break;
    }
    case Architecture::unet: {
      const int depth = spec.unet_depth();
      int64_t block = 1;
      for (int i = 0; i < depth; ++i) block *= spec.unet_pool;
      const int64_t Tp = round_up(T, block);
      const int64_t Fp = round_up(F, block);
      const int64_t N = static_cast<int64_t>(batch.size());
      const int64_t P = spec.input_planes;
      Tensor xt({N, P, Tp, Fp});
      for (int64_t n = 0; n < N; ++n)
        for (int64_t p = 0; p < P; ++p)
          for (int64_t t = 0; t < T; ++t)
            std::copy_n(batch[n]->planes.data() + (p * T + t) * F, F,
                        xt.data() + ((n * P + p) * Tp + t) * Fp);
      V x = g.input(std::move(xt), false);

      std::vector<V> skips;
      for (int i = 0; i < depth; ++i) {
        x = unet_conv_block(g, ctx, spec, "enc" + std::to_string(i), x, mode,
                            &fg.batch_stats);
        skips.push_back(x);
        x = ad::avg_pool2d(g, x, spec.unet_pool);
      }
      for (int i = depth - 1; i >= 0; --i) {
        const std::string p = "dec" + std::to_string(i);
        x = ad::conv_transpose2d(g, x, ctx.leaf(p + ".up.w"),
                                 ctx.leaf(p + ".up.b"), spec.unet_pool);
        x = ad::concat(g, {x, skips[i]}, 1);
        x = unet_conv_block(g, ctx, spec, p, x, mode, &fg.batch_stats);
      }
      x = unet_conv_block(g, ctx, spec, "final", x, mode, &fg.batch_stats);
      V out = ad::conv2d(g, x, ctx.leaf("unet.head.w"), ctx.leaf("unet.head.b"), 0);
      for (int64_t n = 0; n < N; ++n) {
        V sample = ad::slice(g, out, 0, n, 1);           // [1,6,Tp,Fp]
        sample = ad::slice(g, sample, 2, 0, T);
        sample = ad::slice(g, sample, 3, 0, F);
        auto plane = [&](int kk) {
          return ad::reshape(g, ad::slice(g, sample, 1, kk, 1), {1, T, F});
        };
        fg.heads.push_back(make_head(g, spec, plane(0), plane(1), plane(2),
                                     plane(3), plane(4), plane(5)));
      }
      break;
    }
  }
}

MaskTriplet forward(const ModelSpec& spec, const Parameters& params,
                    const InputFeature& feature, EvalMode mode) {
  ForwardGraph fg;
  build_forward(fg, spec, params, {&feature}, mode, false);
  const HeadNodes& h = fg.heads[0];
  MaskTriplet t;
  t.mask = fg.graph.val(h.mask);
  t.cos_phase = fg.graph.val(h.cos_phase);
  t.sin_phase = fg.graph.val(h.sin_phase);
  if (!all_finite(t.mask) || !all_finite(t.cos_phase) || !all_finite(t.sin_phase))
    throw NumericError("forward: non-finite activation at the output head");
  return t;
}

GradientResult gradient(const ModelSpec& spec, const Parameters& params,
                        const std::vector<const InputFeature*>& batch,
                        const LossBuilder& loss_builder, EvalMode mode) {
  ForwardGraph fg;
  build_forward(fg, spec, params, batch, mode, true);
  V loss = loss_builder(fg.graph, fg.heads);
  if (fg.graph.val(loss).numel() != 1)
    throw ShapeError("gradient: loss closure must return a scalar");
  GradientResult res;
  res.loss = fg.graph.val(loss).v[0];
  if (!std::isfinite(res.loss)) throw NumericError("gradient: non-finite loss");
  fg.graph.backward(loss);
  res.grads.resize(params.items.size());
  for (size_t i = 0; i < params.items.size(); ++i) {
    if (!params.items[i].trainable) continue;
    if (fg.param_leaves[i].valid())
      res.grads[i] = fg.graph.grad_of(fg.param_leaves[i]);
    else
      res.grads[i] = Tensor::zeros(params.items[i].value.shape);
    if (!all_finite(res.grads[i]))
      throw NumericError("gradient: non-finite gradient for " + params.items[i].name);
  }
  res.batch_stats = std::move(fg.batch_stats);
  return res;
}

TimeSignal reconstruct(const MaskTriplet& triplet,
                       const ComplexSpectrogram& omni, int64_t out_length,
                       int sample_rate) {
  if (omni.channels != 1)
    throw ShapeError("reconstruct: omni spectrogram must be 1-channel");
  if (triplet.frames() != omni.frames || triplet.freq_bins() != omni.freq_bins)
    throw ShapeError("reconstruct: triplet/omni dimension mismatch");
  const int64_t T = omni.frames;
  const int F = omni.freq_bins;
  ComplexSpectrogram yhat(2, T, omni.config);
  for (int e = 0; e < 2; ++e)
    for (int64_t t = 0; t < T; ++t)
      for (int f = 0; f < F; ++f) {
        const int64_t i = (e * T + t) * F + f;
        const std::complex<double> rot(triplet.cos_phase.v[i],
                                       triplet.sin_phase.v[i]);
        yhat.at(e, t, f) = triplet.mask.v[i] * rot * omni.at(0, t, f);
      }
  return istft(yhat, out_length, sample_rate);
}

MaskTriplet oracle_triplet(const ComplexSpectrogram& target,
                           const ComplexSpectrogram& omni) {
  if (target.channels != 2 || omni.channels != 1)
    throw ShapeError("oracle_triplet: expected 2-channel target, 1-channel omni");
  if (target.frames != omni.frames || target.freq_bins != omni.freq_bins)
    throw ShapeError("oracle_triplet: dimension mismatch");
  const int64_t T = omni.frames;
  const int F = omni.freq_bins;
  MaskTriplet t;
  t.mask = Tensor({2, T, F});
  t.cos_phase = Tensor({2, T, F});
  t.sin_phase = Tensor({2, T, F});
  for (int e = 0; e < 2; ++e)
    for (int64_t tt = 0; tt < T; ++tt)
      for (int f = 0; f < F; ++f) {
        const int64_t i = (e * T + tt) * F + f;
        const std::complex<double> y = target.at(e, tt, f);
        const std::complex<double> o = omni.at(0, tt, f);
        const double my = std::abs(y), mo = std::abs(o);
        t.mask.v[i] = mo > 0.0 ? std::min(my / mo, 1.0) : 0.0;
        const double denom = my * mo;
        if (denom > 0.0) {
          const std::complex<double> u = y * std::conj(o);
          t.cos_phase.v[i] = u.real() / denom;
          t.sin_phase.v[i] = u.imag() / denom;
        } else {
          t.cos_phase.v[i] = 1.0;
          t.sin_phase.v[i] = 0.0;
        }
      }
  return t;
}

}  // namespace ambibin
