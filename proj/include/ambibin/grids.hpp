// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "ambibin/ambisonics.hpp"

namespace ambibin {

/// Spherical quadrature grid. Weights integrate over the full sphere, i.e.
/// they sum to 4pi.
struct QuadratureGrid {
  std::vector<Direction> directions;
  std::vector<double> weights;

  size_t size() const { return directions.size(); }
  void validate() const;
};

/// 24-point spherical 7-design (equal weights). Integrates spherical
/// polynomials up to degree 7 exactly; sufficient for order-3 work.
QuadratureGrid tdesign24();

/// 26-point Lebedev grid, exact up to degree 7. Octahedron vertices, edge
/// midpoints and cube vertices with rational weights 1/21, 4/105, 9/280.
QuadratureGrid lebedev26();

}  // namespace ambibin
