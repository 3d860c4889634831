// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <vector>

#include "ambibin/ambisonics.hpp"
#include "ambibin/grids.hpp"

namespace ambibin {

/// Measured (or synthetic) HRIR set: per-direction stereo impulse responses.
/// Optional quadrature weights sum to 4pi; required for SFT encoding.
struct HrirSet {
  std::vector<Direction> directions;
  // [N x 2 x taps], ear 0 = left
  std::vector<double> impulse_responses;
  int taps = 0;
  int sample_rate = 0;
  std::vector<double> quadrature_weights;  // empty or size N

  size_t count() const { return directions.size(); }
  double* hrir(size_t dir_index, int ear) {
    return impulse_responses.data() + (dir_index * 2 + ear) * taps;
  }
  const double* hrir(size_t dir_index, int ear) const {
    return impulse_responses.data() + (dir_index * 2 + ear) * taps;
  }
  void validate() const;
};

/// Spherical-harmonic-domain HRTF: complex coefficients per ACN channel, ear
/// and one-sided frequency bin (N3D basis).
struct SpHrtf {
  int order = 0;
  int fft_size = 0;  // power of two >= taps of the encoded set
  int sample_rate = 0;
  // [(order+1)^2 x 2 x (fft_size/2 + 1)]
  std::vector<std::complex<double>> coefficients;

  int freq_bins() const { return fft_size / 2 + 1; }
  std::complex<double>& at(int acn, int ear, int f) {
    return coefficients[(static_cast<size_t>(acn) * 2 + ear) * freq_bins() + f];
  }
  std::complex<double> at(int acn, int ear, int f) const {
    return coefficients[(static_cast<size_t>(acn) * 2 + ear) * freq_bins() + f];
  }
};

/// Sampling (projection) decoder: loudspeaker j carries
/// w_j * sum_i A_i(t) y_i(direction_j) in the N3D basis. The clip is
/// converted to N3D internally when needed. Returns [grid size x length].
std::vector<std::vector<double>> vls_decode(const AmbisonicClip& clip,
                                            const std::vector<Direction>& grid,
                                            const std::vector<double>& weights);

/// Virtual-loudspeaker render: decode to the HRIR grid, convolve each feed
/// with its direction's HRIR, sum per ear. Output cropped to the input
/// length unless keep_tail is set (then length + taps - 1).
TimeSignal vls_render(const AmbisonicClip& clip, const HrirSet& hrirs,
                      bool keep_tail = false);

/// Discrete spherical Fourier transform of the HRTF set:
/// H_i(w) = sum_j w_j H(w, dir_j) y_i(dir_j), N3D basis, computed on the
/// per-frequency DFT of the HRIRs.
SpHrtf sft_encode(const HrirSet& hrirs, int order);

/// Spherical-HRTF render: per ear, sum_i A_i convolved with the inverse DFT
/// of H_i. Output cropped to the input length unless keep_tail is set.
TimeSignal sphrtf_render(const AmbisonicClip& clip, const SpHrtf& sp,
                         bool keep_tail = false);

/// Direct or FFT linear convolution (threshold on kernel length).
std::vector<double> convolve(std::span<const double> x, std::span<const double> h);

}  // namespace ambibin
