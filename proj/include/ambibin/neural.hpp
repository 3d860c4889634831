// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ambibin/autodiff.hpp"
#include "ambibin/features.hpp"

namespace ambibin {

enum class Architecture { dnn4, gru4, unet };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

/// Hyperparameters of the three renderer architectures. The output head is
/// shared: 6 planes per (frame, bin) — magnitude mask, cos and sin of the
/// phase offset, for each of the two ears. The mask plane is squashed with a
/// logistic into [0,1]; (cos, sin) pass tanh and are then jointly normalized
/// by sqrt(cos^2 + sin^2 + head_eps).
struct ModelSpec {
  Architecture architecture = Architecture::gru4;
  int input_planes = 20;
  int freq_bins = 513;

  // dnn4: per-frame MLP over the flattened (planes x bins) vector,
  // LeakyReLU after each hidden layer, then a projection to 6*freq_bins.
  std::vector<int> dnn_hidden{1024, 1024, 128};

  // gru4: stacked bidirectional GRU layers over frames (input flattened to
  // planes*bins per frame), then a per-frame linear to 6*freq_bins.
  int gru_hidden = 1024;
  int gru_layers = 3;

  // unet: encoder/decoder with double-conv blocks (conv + batchnorm +
  // LeakyReLU), average-pool downsampling and transpose-conv upsampling with
  // skip concatenations; inputs are zero-padded to multiples of
  // unet_pool^depth and cropped after.
  std::vector<int> unet_channels{32, 64, 128, 256, 384, 384};
  int unet_kernel = 3;
  int unet_pool = 2;

  double leaky_slope = 0.01;
  double head_eps = 1e-8;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  int output_planes() const { return 6; }
  int unet_depth() const { return static_cast<int>(unet_channels.size()); }
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Flat, ordered parameter store. Order is the registry order for the spec,
/// which fixes initialization draws and checkpoint layout.
struct Parameters {
  std::vector<NamedTensor> items;
  uint64_t seed = 0;

  int find(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  int64_t trainable_count() const;
};

/// Parameter table entry used to build and initialize the registry.
struct ParamDef {
  std::string name;
  std::vector<int64_t> shape;
  int64_t fan_in = 0;  // 0: zero-init; <0 special (gamma=1, rvar=1)
  bool trainable = true;
};
std::vector<ParamDef> param_table(const ModelSpec& spec);

/// Deterministic init: weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases
/// zero, batchnorm gamma 1 / beta 0, running stats (0, 1).
Parameters init_params(const ModelSpec& spec, uint64_t seed);

/// Per-ear mask magnitude in [0,1] plus unit-normalized (cos, sin) phase
/// offset, each [2 x T x F] with ear 0 = left.
struct MaskTriplet {
  Tensor mask;
  Tensor cos_phase;
  Tensor sin_phase;

  int64_t frames() const { return mask.dim(1); }
  int64_t freq_bins() const { return mask.dim(2); }
  void validate() const;
};

enum class EvalMode { training, inference };

/// Handles to one sample's head outputs inside a graph, each [2 x T x F].
struct HeadNodes {
  ad::V mask, cos_phase, sin_phase;
};

struct BatchStat {
  std::string bn_prefix;  // e.g. "enc0.bn1"
  Tensor mean;
  Tensor var;      // biased
  int64_t count = 0;  // elements per channel that produced the stats
};

struct ForwardGraph {
  ad::Graph graph;
  std::vector<HeadNodes> heads;
  std::vector<ad::V> param_leaves;  // aligned with Parameters::items; invalid for non-trainable
  std::vector<BatchStat> batch_stats;
};

/// Builds the forward graph for a batch of input features (all sharing T and
/// F). `with_grad` makes trainable parameters graph leaves.
void build_forward(ForwardGraph& fg, const ModelSpec& spec,
                   const Parameters& params,
                   const std::vector<const InputFeature*>& batch, EvalMode mode,
                   bool with_grad);

MaskTriplet forward(const ModelSpec& spec, const Parameters& params,
                    const InputFeature& feature,
                    EvalMode mode = EvalMode::inference);

/// Builds a scalar loss node from the per-sample head outputs.
using LossBuilder =
    std::function<ad::V(ad::Graph&, const std::vector<HeadNodes>&)>;

struct GradientResult {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with Parameters::items; empty for non-trainable
  std::vector<BatchStat> batch_stats;
};

/// Exact reverse-mode gradient of the closure's loss w.r.t. every trainable
/// parameter. Throws NumericError on non-finite loss or gradients.
GradientResult gradient(const ModelSpec& spec, const Parameters& params,
                        const std::vector<const InputFeature*>& batch,
                        const LossBuilder& loss_builder,
                        EvalMode mode = EvalMode::training);

/// Applies the triplet to the omni spectrogram and inverts:
/// Yhat = mask * (cos + i sin) * O per ear, then istft.
TimeSignal reconstruct(const MaskTriplet& triplet,
                       const ComplexSpectrogram& omni, int64_t out_length,
                       int sample_rate);

/// Ground-truth triplet: mask = clip(|Y|/|O|, 0, 1) and the phase offset of
/// Y relative to O. Zero-magnitude bins get mask 0 and phase (1, 0).
MaskTriplet oracle_triplet(const ComplexSpectrogram& target,
                           const ComplexSpectrogram& omni);

bool all_finite(const Tensor& t);

}  // namespace ambibin
