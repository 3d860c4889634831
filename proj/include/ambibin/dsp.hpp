// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "ambibin/common.hpp"

namespace ambibin {

/// Multichannel time-domain signal, row-major [channels x length], double
/// precision throughout. File I/O may quantize; the in-memory form never does.
struct TimeSignal {
  int channels = 0;
  int64_t length = 0;
  int sample_rate = 0;
  std::vector<double> samples;  // channels * length

  TimeSignal() = default;
  TimeSignal(int ch, int64_t len, int rate)
      : channels(ch), length(len), sample_rate(rate),
        samples(static_cast<size_t>(ch) * static_cast<size_t>(len), 0.0) {}

  double& at(int c, int64_t n) { return samples[static_cast<size_t>(c) * length + n]; }
  double at(int c, int64_t n) const { return samples[static_cast<size_t>(c) * length + n]; }
  std::span<double> channel(int c) { return {samples.data() + static_cast<size_t>(c) * length, static_cast<size_t>(length)}; }
  std::span<const double> channel(int c) const { return {samples.data() + static_cast<size_t>(c) * length, static_cast<size_t>(length)}; }

  /// Extracts one channel as a 1-channel signal.
  TimeSignal take_channel(int c) const;

  void validate() const;
};

enum class WindowKind { hann };

struct StftConfig {
  int window_length = 1024;
  int hop = 512;
  int fft_size = 1024;
  WindowKind window = WindowKind::hann;

  void validate() const;
  int freq_bins() const { return fft_size / 2 + 1; }
  /// Frame count for a signal of raw length `n` with center padding.
  int64_t frames_for(int64_t n) const;

  bool operator==(const StftConfig&) const = default;
};

/// One-sided complex spectrogram, row-major [channels x frames x freq_bins].
struct ComplexSpectrogram {
  int channels = 0;
  int64_t frames = 0;
  int freq_bins = 0;
  StftConfig config;
  std::vector<std::complex<double>> bins;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int ch, int64_t fr, const StftConfig& cfg)
      : channels(ch), frames(fr), freq_bins(cfg.freq_bins()), config(cfg),
        bins(static_cast<size_t>(ch) * fr * cfg.freq_bins()) {}

  std::complex<double>& at(int c, int64_t t, int f) {
    return bins[(static_cast<size_t>(c) * frames + t) * freq_bins + f];
  }
  std::complex<double> at(int c, int64_t t, int f) const {
    return bins[(static_cast<size_t>(c) * frames + t) * freq_bins + f];
  }

  ComplexSpectrogram take_channel(int c) const;
  void validate() const;
};

/// Radix-2 FFT with a precomputed twiddle table. Sizes must be powers of two.
class Fft {
 public:
  explicit Fft(int n);

  int size() const { return n_; }

  /// In-place complex transform. Forward uses e^{-i2pi kn/N}; the inverse
  /// divides by N.
  void transform(std::complex<double>* a, bool inverse) const;

  /// Real input -> one-sided spectrum (n/2 + 1 bins), unnormalized forward.
  void rfft(const double* in, std::complex<double>* out) const;

  /// One-sided spectrum -> real output of length n (conjugate-symmetric
  /// extension assumed), includes the 1/N factor.
  void irfft(const std::complex<double>* in, double* out) const;

 private:
  int n_;
  int log2n_;
  std::vector<std::complex<double>> twiddle_;  // e^{-i2pi j/N}, j < N/2
  std::vector<uint32_t> bitrev_;
  mutable std::vector<std::complex<double>> scratch_;
};

std::vector<double> make_window(WindowKind kind, int length);

/// Windowed STFT with center padding (window_length/2 zeros each side).
/// frames = 1 + floor((padded_length - window_length) / hop).
ComplexSpectrogram stft(const TimeSignal& signal, const StftConfig& config);

/// Weighted overlap-add inverse with per-sample window-square normalization;
/// output truncated or zero-padded to out_length. The config carries no rate,
/// so the caller supplies one for the result.
TimeSignal istft(const ComplexSpectrogram& spec, int64_t out_length,
                 int sample_rate = 48000);

bool is_power_of_two(int64_t n);
int64_t next_power_of_two(int64_t n);

}  // namespace ambibin
