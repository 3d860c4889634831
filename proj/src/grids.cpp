// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ambibin/grids.hpp"

#include <cmath>

namespace ambibin {

void QuadratureGrid::validate() const {
  if (directions.size() != weights.size())
    throw ShapeError("QuadratureGrid: directions/weights size mismatch");
  if (directions.empty()) throw ShapeError("QuadratureGrid: empty grid");
  double sum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw ShapeError("QuadratureGrid: weights must be positive");
    sum += w;
  }
  if (std::abs(sum - kFourPi) > 1e-6 * kFourPi)
    throw ShapeError("QuadratureGrid: weights must sum to 4pi");
}

QuadratureGrid tdesign24() {
  // Improved snub cube: the orbit of one point under the chiral octahedral
  // rotation group, positioned so all degree 4 and 6 moments vanish.
  static const double pts[24][3] = {
      {0.86624681810782056, 0.42251865376111158, 0.26663540151670473},
      {0.86624681810782056, -0.42251865376111158, -0.26663540151670473},
      {-0.86624681810782056, 0.42251865376111158, -0.26663540151670473},
      {-0.86624681810782056, -0.42251865376111158, 0.26663540151670473},
      {0.86624681810782056, 0.26663540151670473, -0.42251865376111158},
      {0.86624681810782056, -0.26663540151670473, 0.42251865376111158},
      {-0.86624681810782056, 0.26663540151670473, 0.42251865376111158},
      {-0.86624681810782056, -0.26663540151670473, -0.42251865376111158},
      {0.42251865376111158, 0.86624681810782056, -0.26663540151670473},
      {0.42251865376111158, -0.86624681810782056, 0.26663540151670473},
      {-0.42251865376111158, 0.86624681810782056, 0.26663540151670473},
      {-0.42251865376111158, -0.86624681810782056, -0.26663540151670473},
      {0.42251865376111158, 0.26663540151670473, 0.86624681810782056},
      {0.42251865376111158, -0.26663540151670473, -0.86624681810782056},
      {-0.42251865376111158, 0.26663540151670473, -0.86624681810782056},
      {-0.42251865376111158, -0.26663540151670473, 0.86624681810782056},
      {0.26663540151670473, 0.86624681810782056, 0.42251865376111158},
      {0.26663540151670473, -0.86624681810782056, -0.42251865376111158},
      {-0.26663540151670473, 0.86624681810782056, -0.42251865376111158},
      {-0.26663540151670473, -0.86624681810782056, 0.42251865376111158},
      {0.26663540151670473, 0.42251865376111158, -0.86624681810782056},
      {0.26663540151670473, -0.42251865376111158, 0.86624681810782056},
      {-0.26663540151670473, 0.42251865376111158, 0.86624681810782056},
      {-0.26663540151670473, -0.42251865376111158, -0.86624681810782056},
  };
  QuadratureGrid grid;
  const double w = kFourPi / 24.0;
  for (const auto& p : pts) {
    grid.directions.push_back(Direction::from_unit_vector(p[0], p[1], p[2]));
    grid.weights.push_back(w);
  }
  return grid;
}

QuadratureGrid lebedev26() {
  QuadratureGrid grid;
  auto push = [&grid](double x, double y, double z, double w) {
    grid.directions.push_back(Direction::from_unit_vector(x, y, z));
    grid.weights.push_back(w * kFourPi);
  };
  const double a1 = 1.0 / 21.0;
  const double a2 = 4.0 / 105.0;
  const double a3 = 9.0 / 280.0;
  // 6 octahedron vertices
  for (int axis = 0; axis < 3; ++axis)
    for (int s : {1, -1}) {
      double v[3] = {0, 0, 0};
      v[axis] = s;
      push(v[0], v[1], v[2], a1);
    }
  // 12 edge midpoints
  const double r2 = 1.0 / std::sqrt(2.0);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int sa : {1, -1})
        for (int sb : {1, -1}) {
          double v[3] = {0, 0, 0};
          v[a] = sa * r2;
          v[b] = sb * r2;
          push(v[0], v[1], v[2], a2);
        }
  // 8 cube vertices
  const double r3 = 1.0 / std::sqrt(3.0);
  for (int sx : {1, -1})
    for (int sy : {1, -1})
      for (int sz : {1, -1}) push(sx * r3, sy * r3, sz * r3, a3);
  return grid;
}

}  // namespace ambibin
