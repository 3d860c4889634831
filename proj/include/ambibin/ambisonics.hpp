// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "ambibin/dsp.hpp"

namespace ambibin {

/// Direction on the sphere: elevation in [-pi/2, pi/2], azimuth wrapped to
/// [0, 2pi). Elevation 0 is the horizon, +pi/2 straight up. Azimuth 0 faces
/// +x, pi/2 faces +y (ambiX axes: x front, y left, z up).
struct Direction {
  double elevation = 0.0;
  double azimuth = 0.0;

  Direction() = default;
  Direction(double elev, double azim);

  double x() const;
  double y() const;
  double z() const;
  static Direction from_unit_vector(double x, double y, double z);
};

/// Channel ordering is always ACN. SN3D is the ambiX convention with the
/// omnidirectional basis function equal to 1; N3D is the quadrature-
/// orthonormal basis (integral of y_i*y_j over the sphere = delta_ij), i.e.
/// SN3D scaled by sqrt((2n+1)/(4pi)) per degree n.
enum class ShNormalization { SN3D, N3D };

struct AmbisonicClip {
  TimeSignal signal;  // (order+1)^2 channels
  int order = 0;
  ShNormalization normalization = ShNormalization::SN3D;

  void validate() const;
};

/// Single plane wave, used to synthesize test fields.
struct PlaneWaveField {
  Direction direction;
  TimeSignal source;  // 1 channel
};

int acn_degree(int acn);
int acn_order_in_degree(int acn);  // signed m with i = n^2 + n + m

/// Real spherical harmonic y_i(direction) for ACN index i, without the
/// Condon-Shortley phase (ambiX sign convention).
double sh_real(int acn_index, const Direction& dir, ShNormalization norm);

/// Per-degree scale factor turning an SN3D value into the N3D value.
double sn3d_to_n3d_factor(int degree);

/// Point-source specialization of the ambisonic encoding integral: channel i
/// carries source * y_i(direction). Exact in the time domain because the
/// basis functions are frequency independent.
AmbisonicClip encode_plane_wave(const PlaneWaveField& field, int order,
                                ShNormalization norm);

/// ACN channel 0 as a 1-channel signal.
TimeSignal omni_channel(const AmbisonicClip& clip);

AmbisonicClip convert_normalization(const AmbisonicClip& clip,
                                    ShNormalization target);

}  // namespace ambibin
