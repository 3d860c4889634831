// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/features.hpp"

#include <cmath>

namespace ambibin {

std::vector<std::pair<int, int>> channel_pairs(int channels) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < channels; ++a)
    for (int b = a + 1; b < channels; ++b) pairs.emplace_back(a, b);
  return pairs;
}

namespace {

double angle_or_zero(const std::complex<double>& z) {
  if (z.real() == 0.0 && z.imag() == 0.0) return 0.0;
  return std::atan2(z.imag(), z.real());
}

double wrap_2pi(double phi) {
  phi = std::fmod(phi, kTwoPi);
  if (phi < 0) phi += kTwoPi;
  return phi;
}

}  // namespace

Tensor phase_differences(const ComplexSpectrogram& spec) {
  if (spec.channels < 2)
    throw ShapeError("phase_differences: need at least 2 channels to pair");
  const auto pairs = channel_pairs(spec.channels);
  const int64_t P = static_cast<int64_t>(pairs.size());
  Tensor out({P, spec.frames, spec.freq_bins});
  for (int64_t p = 0; p < P; ++p) {
    const auto [a, b] = pairs[p];
    double* dst = out.data() + p * spec.frames * spec.freq_bins;
    for (int64_t t = 0; t < spec.frames; ++t)
      for (int f = 0; f < spec.freq_bins; ++f)
        *dst++ = wrap_2pi(angle_or_zero(spec.at(a, t, f)) -
                          angle_or_zero(spec.at(b, t, f)));
  }
  return out;
}

PhaseDiffFeature phase_diff_feature(const ComplexSpectrogram& spec,
                                    const ComplexSpectrogram& omni) {
  if (omni.channels != 1)
    throw ShapeError("phase_diff_feature: omni spectrogram must be 1-channel");
  if (omni.frames != spec.frames || omni.freq_bins != spec.freq_bins)
    throw ShapeError("phase_diff_feature: omni/spec dimension mismatch");
  const Tensor dphi = phase_differences(spec);
  const int64_t P = dphi.dim(0);
  const int64_t T = spec.frames;
  const int64_t F = spec.freq_bins;

  PhaseDiffFeature feat;
  feat.pair_index = channel_pairs(spec.channels);
  feat.planes = Tensor({2 * P, T, F});
  double* cos_half = feat.planes.data();
  double* sin_half = feat.planes.data() + P * T * F;
  const double* phi = dphi.data();
  for (int64_t p = 0; p < P; ++p) {
    for (int64_t t = 0; t < T; ++t)
      for (int64_t f = 0; f < F; ++f) {
        const double mag = std::abs(omni.at(0, t, static_cast<int>(f)));
        const double d = *phi++;
        *cos_half++ = mag * std::cos(d);
        *sin_half++ = mag * std::sin(d);
      }
  }
  return feat;
}

InputFeature assemble_input(const ComplexSpectrogram& spec) {
  const int C = spec.channels;
  const int64_t T = spec.frames;
  const int64_t F = spec.freq_bins;
  const auto pairs = channel_pairs(C);
  const int64_t P = static_cast<int64_t>(pairs.size());

  InputFeature feat;
  feat.planes = Tensor({2 * C + 2 * P, T, F});
  double* dst = feat.planes.data();
  for (int c = 0; c < C; ++c) {
    feat.layout.push_back("re_x" + std::to_string(c));
    for (int64_t t = 0; t < T; ++t)
      for (int64_t f = 0; f < F; ++f) *dst++ = spec.at(c, t, static_cast<int>(f)).real();
  }
  for (int c = 0; c < C; ++c) {
    feat.layout.push_back("im_x" + std::to_string(c));
    for (int64_t t = 0; t < T; ++t)
      for (int64_t f = 0; f < F; ++f) *dst++ = spec.at(c, t, static_cast<int>(f)).imag();
  }
  const PhaseDiffFeature d = phase_diff_feature(spec, spec.take_channel(0));
  std::copy(d.planes.v.begin(), d.planes.v.end(), dst);
  for (const auto& [a, b] : pairs)
    feat.layout.push_back("d_cos_" + std::to_string(a) + std::to_string(b));
  for (const auto& [a, b] : pairs)
    feat.layout.push_back("d_sin_" + std::to_string(a) + std::to_string(b));
  return feat;
}

}  // namespace ambibin
