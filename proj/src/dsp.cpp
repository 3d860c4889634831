// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace ambibin {

bool is_power_of_two(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

int64_t next_power_of_two(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void TimeSignal::validate() const {
  if (channels < 1) throw ShapeError("TimeSignal: channels must be >= 1");
  if (length < 1) throw ShapeError("TimeSignal: length must be >= 1");
  if (sample_rate <= 0) throw ShapeError("TimeSignal: sample_rate must be positive");
  if (samples.size() != static_cast<size_t>(channels) * static_cast<size_t>(length))
    throw ShapeError("TimeSignal: sample buffer does not match channels*length");
  for (double s : samples)
    if (!std::isfinite(s)) throw NumericError("TimeSignal: non-finite sample");
}

TimeSignal TimeSignal::take_channel(int c) const {
  TimeSignal out(1, length, sample_rate);
  std::copy_n(samples.data() + static_cast<size_t>(c) * length, length, out.samples.data());
  return out;
}

void StftConfig::validate() const {
  if (hop <= 0 || window_length <= 0 || fft_size <= 0)
    throw ShapeError("StftConfig: sizes must be positive");
  if (hop > window_length)
    throw ShapeError("StftConfig: hop must not exceed window_length");
  if (window_length > fft_size)
    throw ShapeError("StftConfig: window_length must not exceed fft_size");
  if (!is_power_of_two(fft_size))
    throw ShapeError("StftConfig: fft_size must be a power of two");
}

int64_t StftConfig::frames_for(int64_t n) const {
  const int64_t padded = n + 2 * (window_length / 2);
  return 1 + (padded - window_length) / hop;
}

ComplexSpectrogram ComplexSpectrogram::take_channel(int c) const {
  ComplexSpectrogram out(1, frames, config);
  std::copy_n(bins.data() + static_cast<size_t>(c) * frames * freq_bins,
              static_cast<size_t>(frames) * freq_bins, out.bins.data());
  return out;
}

void ComplexSpectrogram::validate() const {
  config.validate();
  if (freq_bins != config.freq_bins())
    throw ShapeError("ComplexSpectrogram: freq_bins inconsistent with config");
  if (bins.size() != static_cast<size_t>(channels) * frames * freq_bins)
    throw ShapeError("ComplexSpectrogram: bin buffer does not match dimensions");
  for (const auto& b : bins)
    if (!std::isfinite(b.real()) || !std::isfinite(b.imag()))
      throw NumericError("ComplexSpectrogram: non-finite bin");
}

Fft::Fft(int n) : n_(n) {
  if (!is_power_of_two(n)) throw ShapeError("Fft: size must be a power of two");
  log2n_ = 0;
  while ((1 << log2n_) < n) ++log2n_;
  twiddle_.resize(n / 2);
  for (int j = 0; j < n / 2; ++j)
    twiddle_[j] = std::polar(1.0, -kTwoPi * j / n);
  bitrev_.resize(n);
  for (uint32_t i = 0; i < static_cast<uint32_t>(n); ++i) {
    uint32_t r = 0;
    for (int b = 0; b < log2n_; ++b)
      if (i & (1u << b)) r |= 1u << (log2n_ - 1 - b);
    bitrev_[i] = r;
  }
  scratch_.resize(n);
}

void Fft::transform(std::complex<double>* a, bool inverse) const {
  const int n = n_;
  for (int i = 0; i < n; ++i) {
    const uint32_t r = bitrev_[i];
    if (static_cast<uint32_t>(i) < r) std::swap(a[i], a[r]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int half = len / 2;
    const int stride = n / len;
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < half; ++j) {
        std::complex<double> w = twiddle_[static_cast<size_t>(j) * stride];
        if (inverse) w = std::conj(w);
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= inv;
  }
}

void Fft::rfft(const double* in, std::complex<double>* out) const {
  for (int i = 0; i < n_; ++i) scratch_[i] = {in[i], 0.0};
  transform(scratch_.data(), false);
  std::copy_n(scratch_.data(), n_ / 2 + 1, out);
}

void Fft::irfft(const std::complex<double>* in, double* out) const {
  const int half = n_ / 2;
  scratch_[0] = in[0];
  scratch_[half] = in[half];
  for (int f = 1; f < half; ++f) {
    scratch_[f] = in[f];
    scratch_[n_ - f] = std::conj(in[f]);
  }
  transform(scratch_.data(), true);
  for (int i = 0; i < n_; ++i) out[i] = scratch_[i].real();
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(length);
  switch (kind) {
    case WindowKind::hann:
      // Periodic hann; satisfies COLA for hops dividing the length.
      for (int n = 0; n < length; ++n)
        w[n] = 0.5 - 0.5 * std::cos(kTwoPi * n / length);
      break;
  }
  return w;
}

ComplexSpectrogram stft(const TimeSignal& signal, const StftConfig& config) {
  config.validate();
  if (signal.length < config.window_length)
    throw ShapeError("stft: signal shorter than one analysis window");

  const int wl = config.window_length;
  const int pad = wl / 2;
  const int64_t frames = config.frames_for(signal.length);
  const auto window = make_window(config.window, wl);
  Fft fft(config.fft_size);

  ComplexSpectrogram spec(signal.channels, frames, config);
  std::vector<double> frame(config.fft_size);
  std::vector<std::complex<double>> out(config.freq_bins());
  for (int c = 0; c < signal.channels; ++c) {
    const auto x = signal.channel(c);
    for (int64_t t = 0; t < frames; ++t) {
      const int64_t start = t * config.hop - pad;
      std::fill(frame.begin(), frame.end(), 0.0);
      for (int n = 0; n < wl; ++n) {
        const int64_t idx = start + n;
        if (idx >= 0 && idx < signal.length) frame[n] = x[idx] * window[n];
      }
      fft.rfft(frame.data(), out.data());
      std::copy_n(out.data(), config.freq_bins(),
                  &spec.at(c, t, 0));
    }
  }
  return spec;
}

TimeSignal istft(const ComplexSpectrogram& spec, int64_t out_length,
                 int sample_rate) {
  spec.validate();
  const StftConfig& cfg = spec.config;
  const int wl = cfg.window_length;
  const int pad = wl / 2;
  const auto window = make_window(cfg.window, wl);
  Fft fft(cfg.fft_size);

  const int64_t acc_len = (spec.frames - 1) * cfg.hop + wl;
  std::vector<double> weight(acc_len, 0.0);
  for (int64_t t = 0; t < spec.frames; ++t)
    for (int n = 0; n < wl; ++n)
      weight[t * cfg.hop + n] += window[n] * window[n];

  TimeSignal out(spec.channels, out_length, sample_rate);
  std::vector<double> acc(acc_len);
  std::vector<double> frame(cfg.fft_size);
  for (int c = 0; c < spec.channels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t t = 0; t < spec.frames; ++t) {
      fft.irfft(&spec.at(c, t, 0), frame.data());
      for (int n = 0; n < wl; ++n)
        acc[t * cfg.hop + n] += frame[n] * window[n];
    }
    auto y = out.channel(c);
    const int64_t copy_len = std::min<int64_t>(out_length, acc_len - pad);
    for (int64_t m = 0; m < copy_len; ++m) {
      const double den = weight[m + pad];
      y[m] = den > 1e-12 ? acc[m + pad] / den : 0.0;
    }
  }
  return out;
}

}  // namespace ambibin
