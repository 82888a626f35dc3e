/*=========================================================================
 *
 *  Copyright atlaseg contributors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *        http://www.apache.org/licenses/LICENSE-2.0.txt
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 *
 *=========================================================================*/
#pragma once

#include "atlaseg/types.hpp"

#include <array>
#include <optional>
#include <string>

namespace atlaseg {

/// Uniform cubic B-spline kernel and its derivative, support (-2, 2).
double bspline3(double x);
double bspline3_derivative(double x);

/// The four cubic B-spline weights for a cell fraction u in [0, 1), covering
/// control points j-1, j, j+1, j+2 of cell j. Weights sum to 1.
std::array<double, 4> bspline3_weights(double u);
std::array<double, 4> bspline3_derivative_weights(double u);  // d/du of the above

/// Global stage: y = matrix * x + translation (mm in, mm out).
struct AffineTransform {
  Matrix3d matrix = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  Vector3d apply(const Vector3d& p) const { return matrix * p + translation; }

  /// Rotation/scale about a center point plus an extra translation.
  static AffineTransform about_center(const Matrix3d& linear, const Vector3d& center,
                                      const Vector3d& extra_translation);
};

/// Local stage: displacement field parameterized by cubic B-spline coefficients
/// on a coarse regular control grid (mm). Zero coefficients give the identity.
struct FfdTransform {
  Vector3i dims{0, 0, 0};     // control points per axis, >= 4 each
  Vector3d spacing{1, 1, 1};  // knot spacing, mm
  Vector3d origin{0, 0, 0};   // mm position of control point (0,0,0)
  CoeffMatrix coefficients;   // dims.prod() rows (x-fastest), columns x/y/z displacement (mm)

  std::int64_t control_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t control_index(int i, int j, int k) const {
    return static_cast<std::int64_t>(i) + dims[0] * (static_cast<std::int64_t>(j) + static_cast<std::int64_t>(dims[1]) * k);
  }

  /// Displacement at a world point; zero outside the control support.
  Vector3d displacement(const Vector3d& p) const;

  /// Visit the up to 64 control points supporting p: cb(flat_index, weight).
  /// Returns false (visiting nothing) when p is outside the support.
  template <typename Callback>
  bool for_each_support_weight(const Vector3d& p, Callback&& cb) const;

  /// Control grid with knot spacing 8 voxels of `ref`, scaled by 2^level_up for
  /// coarser pyramid levels, covering the grid's world extent with the margin
  /// cubic evaluation needs.
  static FfdTransform for_grid(const Grid3& ref, double knots_in_voxels = 8.0);

  /// Exact dyadic refinement: halves the knot spacing, keeping the same
  /// displacement field (cubic B-spline spaces are nested under subdivision).
  FfdTransform refined() const;

  void validate() const;
};

/// T(x) = affine(x) + ffd_displacement(x). Maps fixed-image (target) world
/// coordinates to moving-image world coordinates, so resampling needs no
/// inversion.
struct TransformChain {
  AffineTransform affine;
  std::optional<FfdTransform> ffd;

  Vector3d apply(const Vector3d& p) const {
    Vector3d q = affine.apply(p);
    if (ffd) q += ffd->displacement(p);
    return q;
  }

  static TransformChain identity() { return TransformChain{}; }
};

/// Transform parameter document (JSON), full precision, version checked.
std::string serialize(const TransformChain& chain);
TransformChain deserialize_transform(const std::string& json_text);
void save_transform(const TransformChain& chain, const std::string& path);
TransformChain load_transform(const std::string& path);

// -- inline ---------------------------------------------------------------

template <typename Callback>
bool FfdTransform::for_each_support_weight(const Vector3d& p, Callback&& cb) const {
  const Vector3d g = (p - origin).cwiseQuotient(spacing);
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(g[a]);
    base[a] = static_cast<int>(f);
    frac[a] = g[a] - f;
    if (base[a] - 1 < 0 || base[a] + 2 >= dims[a]) return false;
  }
  const auto wx = bspline3_weights(frac[0]);
  const auto wy = bspline3_weights(frac[1]);
  const auto wz = bspline3_weights(frac[2]);
  for (int c = 0; c < 4; ++c) {
    const double wzc = wz[c];
    for (int b = 0; b < 4; ++b) {
      const double wyz = wy[b] * wzc;
      const std::int64_t row = control_index(base[0] - 1, base[1] - 1 + b, base[2] - 1 + c);
      for (int a = 0; a < 4; ++a) cb(row + a, wx[a] * wyz);
    }
  }
  return true;
}

}  // namespace atlaseg
