// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/baselines.hpp"

#include <cmath>

namespace ambibin {

void HrirSet::validate() const {
  if (directions.empty()) throw ShapeError("HrirSet: no directions");
  if (taps < 1) throw ShapeError("HrirSet: taps must be >= 1");
  if (sample_rate <= 0) throw ShapeError("HrirSet: bad sample rate");
  if (impulse_responses.size() != directions.size() * 2 * static_cast<size_t>(taps))
    throw ShapeError("HrirSet: impulse response buffer size mismatch");
  if (!quadrature_weights.empty()) {
    if (quadrature_weights.size() != directions.size())
      throw ShapeError("HrirSet: weight count mismatch");
    for (double w : quadrature_weights)
      if (w <= 0) throw ShapeError("HrirSet: weights must be positive");
  }
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> h) {
  const int64_t nx = static_cast<int64_t>(x.size());
  const int64_t nh = static_cast<int64_t>(h.size());
  const int64_t ny = nx + nh - 1;
  std::vector<double> y(ny, 0.0);
  if (nh <= 512) {
    for (int64_t i = 0; i < nx; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (int64_t j = 0; j < nh; ++j) y[i + j] += xi * h[j];
    }
    return y;
  }
  const int64_t n = next_power_of_two(ny);
  Fft fft(static_cast<int>(n));
  std::vector<std::complex<double>> a(n), b(n);
  for (int64_t i = 0; i < nx; ++i) a[i] = x[i];
  for (int64_t j = 0; j < nh; ++j) b[j] = h[j];
  fft.transform(a.data(), false);
  fft.transform(b.data(), false);
  for (int64_t i = 0; i < n; ++i) a[i] *= b[i];
  fft.transform(a.data(), true);
  for (int64_t i = 0; i < ny; ++i) y[i] = a[i].real();
  return y;
}

std::vector<std::vector<double>> vls_decode(const AmbisonicClip& clip,
                                            const std::vector<Direction>& grid,
                                            const std::vector<double>& weights) {
  clip.validate();
  if (grid.empty()) throw ShapeError("vls_decode: empty loudspeaker grid");
  if (weights.size() != grid.size())
    throw ShapeError("vls_decode: weight count must match grid size");
  const size_t channels = static_cast<size_t>(clip.signal.channels);
  if (grid.size() < channels)
    throw ShapeError("vls_decode: grid smaller than (order+1)^2");
  const AmbisonicClip n3d = convert_normalization(clip, ShNormalization::N3D);

  std::vector<std::vector<double>> feeds(grid.size());
  const int64_t L = n3d.signal.length;
  for (size_t j = 0; j < grid.size(); ++j) {
    feeds[j].assign(L, 0.0);
    for (size_t i = 0; i < channels; ++i) {
      const double gain =
          weights[j] * sh_real(static_cast<int>(i), grid[j], ShNormalization::N3D);
      const auto ch = n3d.signal.channel(static_cast<int>(i));
      for (int64_t t = 0; t < L; ++t) feeds[j][t] += gain * ch[t];
    }
  }
  return feeds;
}

TimeSignal vls_render(const AmbisonicClip& clip, const HrirSet& hrirs,
                      bool keep_tail) {
  hrirs.validate();
  if (clip.signal.sample_rate != hrirs.sample_rate)
    throw ShapeError("vls_render: clip/HRIR sample rate mismatch");
  std::vector<double> weights = hrirs.quadrature_weights;
  if (weights.empty())
    weights.assign(hrirs.count(), kFourPi / static_cast<double>(hrirs.count()));
  const auto feeds = vls_decode(clip, hrirs.directions, weights);

  const int64_t L = clip.signal.length;
  const int64_t full = L + hrirs.taps - 1;
  const int64_t out_len = keep_tail ? full : L;
  TimeSignal out(2, out_len, clip.signal.sample_rate);
  for (int ear = 0; ear < 2; ++ear) {
    auto dst = out.channel(ear);
    for (size_t j = 0; j < hrirs.count(); ++j) {
      const auto y = convolve({feeds[j].data(), static_cast<size_t>(L)},
                              {hrirs.hrir(j, ear), static_cast<size_t>(hrirs.taps)});
      for (int64_t t = 0; t < out_len; ++t) dst[t] += y[t];
    }
  }
  return out;
}

SpHrtf sft_encode(const HrirSet& hrirs, int order) {
  hrirs.validate();
  if (order < 0) throw ShapeError("sft_encode: negative order");
  const int channels = (order + 1) * (order + 1);
  if (hrirs.count() < static_cast<size_t>(channels))
    throw ShapeError("sft_encode: grid too small for the requested order");
  if (hrirs.quadrature_weights.empty())
    throw ShapeError("sft_encode: quadrature weights required");

  SpHrtf sp;
  sp.order = order;
  sp.sample_rate = hrirs.sample_rate;
  sp.fft_size = static_cast<int>(next_power_of_two(hrirs.taps));
  const int bins = sp.freq_bins();
  sp.coefficients.assign(static_cast<size_t>(channels) * 2 * bins, {0.0, 0.0});

  Fft fft(sp.fft_size);
  std::vector<double> padded(sp.fft_size);
  std::vector<std::complex<double>> spec(bins);
  for (size_t j = 0; j < hrirs.count(); ++j) {
    for (int ear = 0; ear < 2; ++ear) {
      std::fill(padded.begin(), padded.end(), 0.0);
      std::copy_n(hrirs.hrir(j, ear), hrirs.taps, padded.data());
      fft.rfft(padded.data(), spec.data());
      for (int i = 0; i < channels; ++i) {
        const double gain = hrirs.quadrature_weights[j] *
                            sh_real(i, hrirs.directions[j], ShNormalization::N3D);
        for (int f = 0; f < bins; ++f) sp.at(i, ear, f) += gain * spec[f];
      }
    }
  }
  return sp;
}

TimeSignal sphrtf_render(const AmbisonicClip& clip, const SpHrtf& sp,
                         bool keep_tail) {
  clip.validate();
  if (clip.signal.sample_rate != sp.sample_rate)
    throw ShapeError("sphrtf_render: clip/sp-HRTF sample rate mismatch");
  if (clip.order > sp.order)
    throw ShapeError("sphrtf_render: clip order exceeds sp-HRTF order");
  const AmbisonicClip n3d = convert_normalization(clip, ShNormalization::N3D);

  // inverse-DFT each coefficient back to a FIR kernel, filter per channel
  Fft fft(sp.fft_size);
  std::vector<std::complex<double>> spec(sp.freq_bins());
  std::vector<double> kernel(sp.fft_size);

  const int64_t L = clip.signal.length;
  const int64_t full = L + sp.fft_size - 1;
  const int64_t out_len = keep_tail ? full : L;
  TimeSignal out(2, out_len, clip.signal.sample_rate);
  for (int ear = 0; ear < 2; ++ear) {
    auto dst = out.channel(ear);
    for (int i = 0; i < n3d.signal.channels; ++i) {
      for (int f = 0; f < sp.freq_bins(); ++f) spec[f] = sp.at(i, ear, f);
      fft.irfft(spec.data(), kernel.data());
      const auto ch = n3d.signal.channel(i);
      const auto y = convolve({ch.data(), ch.size()},
                              {kernel.data(), kernel.size()});
      for (int64_t t = 0; t < out_len; ++t) dst[t] += y[t];
    }
  }
  return out;
}

}  // namespace ambibin
