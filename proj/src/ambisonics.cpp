// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/ambisonics.hpp"

#include <cmath>

namespace ambibin {

Direction::Direction(double elev, double azim) {
  if (!(elev >= -kPi / 2 - 1e-12 && elev <= kPi / 2 + 1e-12))
    throw ShapeError("Direction: elevation outside [-pi/2, pi/2]");
  elevation = std::clamp(elev, -kPi / 2, kPi / 2);
  azimuth = std::fmod(azim, kTwoPi);
  if (azimuth < 0) azimuth += kTwoPi;
}

double Direction::x() const { return std::cos(elevation) * std::cos(azimuth); }
double Direction::y() const { return std::cos(elevation) * std::sin(azimuth); }
double Direction::z() const { return std::sin(elevation); }

Direction Direction::from_unit_vector(double x, double y, double z) {
  return Direction(std::asin(std::clamp(z, -1.0, 1.0)), std::atan2(y, x));
}

void AmbisonicClip::validate() const {
  signal.validate();
  if (order < 0) throw ShapeError("AmbisonicClip: negative order");
  const int expected = (order + 1) * (order + 1);
  if (signal.channels != expected)
    throw ShapeError("AmbisonicClip: channel count does not match order");
}

int acn_degree(int acn) {
  return static_cast<int>(std::floor(std::sqrt(static_cast<double>(acn))));
}

int acn_order_in_degree(int acn) {
  const int n = acn_degree(acn);
  return acn - n * n - n;
}

namespace {

// Associated Legendre P_n^m(x) without the Condon-Shortley phase, m >= 0.
double legendre_p(int n, int m, double x) {
  double pmm = 1.0;
  if (m > 0) {
    const double somx2 = std::sqrt(std::max(0.0, 1.0 - x * x));
    double fact = 1.0;
    for (int i = 0; i < m; ++i) {
      pmm *= fact * somx2;
      fact += 2.0;
    }
  }
  if (n == m) return pmm;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;
  if (n == m + 1) return pmmp1;
  double pnm = 0.0;
  for (int k = m + 2; k <= n; ++k) {
    pnm = ((2.0 * k - 1.0) * x * pmmp1 - (k + m - 1.0) * pmm) / (k - m);
    pmm = pmmp1;
    pmmp1 = pnm;
  }
  return pnm;
}

double factorial_ratio(int a, int b) {
  // (a)! / (b)! for b >= a
  double r = 1.0;
  for (int i = a + 1; i <= b; ++i) r *= i;
  return 1.0 / r;
}

}  // namespace

double sn3d_to_n3d_factor(int degree) {
  return std::sqrt((2.0 * degree + 1.0) / kFourPi);
}

double sh_real(int acn_index, const Direction& dir, ShNormalization norm) {
  if (acn_index < 0) throw ShapeError("sh_real: negative ACN index");
  const int n = acn_degree(acn_index);
  const int m = acn_order_in_degree(acn_index);
  const int am = std::abs(m);
  const double x = std::sin(dir.elevation);

  // SN3D: sqrt((2 - delta_m0) * (n-|m|)! / (n+|m|)!)
  double norm_factor = std::sqrt((m == 0 ? 1.0 : 2.0) * factorial_ratio(n - am, n + am));
  double value = norm_factor * legendre_p(n, am, x);
  value *= (m >= 0) ? std::cos(am * dir.azimuth) : std::sin(am * dir.azimuth);
  if (norm == ShNormalization::N3D) value *= sn3d_to_n3d_factor(n);
  return value;
}

AmbisonicClip encode_plane_wave(const PlaneWaveField& field, int order,
                                ShNormalization norm) {
  if (order < 0) throw ShapeError("encode_plane_wave: negative order");
  if (field.source.channels != 1)
    throw ShapeError("encode_plane_wave: source must be single channel");
  const int channels = (order + 1) * (order + 1);
  AmbisonicClip clip;
  clip.order = order;
  clip.normalization = norm;
  clip.signal = TimeSignal(channels, field.source.length, field.source.sample_rate);
  const auto src = field.source.channel(0);
  for (int i = 0; i < channels; ++i) {
    const double gain = sh_real(i, field.direction, norm);
    auto dst = clip.signal.channel(i);
    for (int64_t t = 0; t < field.source.length; ++t) dst[t] = gain * src[t];
  }
  return clip;
}

TimeSignal omni_channel(const AmbisonicClip& clip) {
  clip.validate();
  return clip.signal.take_channel(0);
}

AmbisonicClip convert_normalization(const AmbisonicClip& clip,
                                    ShNormalization target) {
  clip.validate();
  if (clip.normalization == target) return clip;
  AmbisonicClip out = clip;
  out.normalization = target;
  for (int i = 0; i < clip.signal.channels; ++i) {
    const double f = sn3d_to_n3d_factor(acn_degree(i));
    const double scale = (target == ShNormalization::N3D) ? f : 1.0 / f;
    auto ch = out.signal.channel(i);
    for (auto& v : ch) v *= scale;
  }
  return out;
}

}  // namespace ambibin
