// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ambibin/ambisonics.hpp"
#include "ambibin/neural.hpp"

namespace ambibin {

enum class LossNorm { L1, L2 };

std::string to_string(LossNorm n);
LossNorm loss_norm_from_string(const std::string& s);

/// Dual-domain loss: norm of the time-domain difference plus gamma times the
/// norm of the complex spectrogram difference, both mean-reduced over all
/// elements.
struct LossConfig {
  double gamma = 1.0;
  LossNorm norm = LossNorm::L1;
  StftConfig stft;  // for the spectral term
};

struct LossBreakdown {
  double total = 0.0;
  double wav = 0.0;
  double sp = 0.0;
};

LossBreakdown loss(const TimeSignal& pred, const TimeSignal& target,
                   const LossConfig& cfg);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, aligned with Parameters::items (empty
/// tensors for non-trainable entries).
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;
};

AdamState init_adam(const Parameters& params);

/// Standard Adam with bias correction. Throws NumericError on non-finite
/// gradients.
void adam_step(Parameters& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg);

/// Paired ambisonic recording and binaural ground truth.
struct ClipPair {
  AmbisonicClip ambisonic;
  TimeSignal binaural;
  std::string id;

  void validate() const;
};

/// Cuts a pair into consecutive non-overlapping fixed-length clips; the
/// trailing remainder is dropped.
std::vector<ClipPair> make_clips(const ClipPair& pair, double clip_seconds);

struct MixedClip {
  ClipPair pair;
  std::vector<size_t> constituents;  // base first, then the drawn partners
};

/// For every base clip, draws k distinct other clips and emits the unit-gain
/// sum of the k+1 pairs (set rescale to divide by k+1). Deterministic in the
/// seed.
std::vector<MixedClip> mix_augment(const std::vector<ClipPair>& clips, int k,
                                   uint64_t seed, bool rescale = false);

/// One mixed pair for a given base index and draw seed; shared by
/// mix_augment and the training loop.
MixedClip mix_one(const std::vector<ClipPair>& clips, size_t base, int k,
                  uint64_t draw_seed, bool rescale);

struct TrainConfig {
  ModelSpec model;
  LossConfig loss;
  AdamConfig adam;
  int batch_size = 16;
  int64_t steps = 100000;
  double clip_seconds = 3.0;
  int mix_k = 0;
  bool mix_rescale = false;
  uint64_t seed = 0;
  StftConfig stft;  // feature extraction
  int64_t log_every = 50;
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  double grad_clip_norm = 0.0;   // 0: off

  void validate() const;
};

/// Deterministic, stateless batch schedule: epoch-wise shuffles consumed in
/// order, reconstructible from (seed, step) alone so resume needs no RNG
/// state.
std::vector<size_t> batch_indices(uint64_t seed, int64_t step, int batch_size,
                                  size_t dataset_size);

/// Rounds every element to the nearest float32. Training state lives on the
/// float32 grid so checkpoints round-trip bit-exactly and a resumed run
/// matches an uninterrupted one.
void quantize_f32(Tensor& t);

struct Checkpoint;  // checkpoint.hpp

struct LogRecord {
  int64_t step = 0;
  LossBreakdown losses;
};

struct TrainResult {
  Parameters params;
  AdamState adam;
  int64_t step = 0;
  std::vector<LogRecord> log;
};

/// Runs forward -> loss -> gradient -> adam over the shuffled batch schedule.
/// `checkpoint_path` receives the final state (plus periodic copies with a
/// .step<N> suffix when configured); empty strings disable file output.
TrainResult train(const TrainConfig& cfg, const std::vector<ClipPair>& clips,
                  const std::string& checkpoint_path = "",
                  const std::string& log_path = "",
                  const Checkpoint* resume = nullptr);

/// The differentiable counterpart of loss(): reconstruction chain plus the
/// dual-domain objective for one sample. Exposed for reuse in custom loops.
ad::V build_sample_loss(ad::Graph& g, const HeadNodes& head,
                        const ComplexSpectrogram& omni,
                        const TimeSignal& target, const LossConfig& cfg);

}  // namespace ambibin
