// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ambibin/dsp.hpp"
#include "ambibin/tensor.hpp"

namespace ambibin {

/// Omni-magnitude-weighted phase differences: for every channel pair (a, b),
/// a cos plane |O| * cos(dphi) and a sin plane |O| * sin(dphi). Planes come
/// as [cos planes..., sin planes...], shape [2P x T x F].
struct PhaseDiffFeature {
  Tensor planes;
  std::vector<std::pair<int, int>> pair_index;
};

/// Network input: [Re X_0..Re X_{C-1}, Im X_0..Im X_{C-1}, D cos planes,
/// D sin planes], shape [(2C + 2P) x T x F]. For first-order material this is
/// 8 + 12 = 20 planes.
struct InputFeature {
  Tensor planes;
  std::vector<std::string> layout;  // one label per plane
  int64_t frames() const { return planes.dim(1); }
  int64_t freq_bins() const { return planes.dim(2); }
  int64_t plane_count() const { return planes.dim(0); }
};

std::vector<std::pair<int, int>> channel_pairs(int channels);

/// Pairwise phase differences angle(X_a) - angle(X_b) wrapped into [0, 2pi),
/// pairs in lexicographic order (a < b). Zero-magnitude bins use phase 0.
Tensor phase_differences(const ComplexSpectrogram& spec);

PhaseDiffFeature phase_diff_feature(const ComplexSpectrogram& spec,
                                    const ComplexSpectrogram& omni);

/// Assembles the full input feature; spec channel 0 must be the ACN omni
/// channel.
InputFeature assemble_input(const ComplexSpectrogram& spec);

}  // namespace ambibin
