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

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace atlaseg {

using Eigen::Array3d;
using Eigen::ArrayXd;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::Vector3i;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Voxel-major (x-fastest) probability field, one row per voxel.
using ProbMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Control-point displacements, one row per control point (x-fastest), columns x/y/z.
using CoeffMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Malformed or inconsistent input data (files, grids, label codes). CLI exit 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (degenerate metric, non-finite gradient). CLI exit 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Regular axis-aligned voxel lattice: index (i,j,k) sits at origin + index * spacing (mm).
struct Grid3 {
  Vector3i dims{0, 0, 0};     // voxel counts, >= 1 each
  Vector3d spacing{1, 1, 1};  // mm per voxel, > 0 each
  Vector3d origin{0, 0, 0};   // mm position of voxel (0,0,0)

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t index(int i, int j, int k) const {
    return static_cast<std::int64_t>(i) + dims[0] * (static_cast<std::int64_t>(j) + static_cast<std::int64_t>(dims[1]) * k);
  }
  Vector3d world(const Vector3d& voxel) const { return origin + voxel.cwiseProduct(spacing); }
  Vector3d world(int i, int j, int k) const { return world(Vector3d(i, j, k)); }
  Vector3d voxel(const Vector3d& world_pt) const {
    return (world_pt - origin).cwiseQuotient(spacing);
  }
  bool same_as(const Grid3& o, double tol = 1e-6) const {
    return dims == o.dims && (spacing - o.spacing).cwiseAbs().maxCoeff() <= tol &&
           (origin - o.origin).cwiseAbs().maxCoeff() <= tol;
  }
  void validate() const {
    if (dims.minCoeff() < 1) throw DataError("grid dims must be >= 1 per axis");
    if (!(spacing.minCoeff() > 0)) throw DataError("grid spacing must be > 0 per axis");
  }
};

/// Ordered raw label codes; index in the vector is the compact class id.
/// Entry 0 is always 0 (background). MM-WHS default covers the seven heart substructures.
using ClassMap = std::vector<int>;

inline ClassMap mmwhs_class_map() { return {0, 205, 420, 500, 550, 600, 820, 850}; }

inline void validate_class_map(const ClassMap& cm) {
  if (cm.empty() || cm.front() != 0) throw DataError("class_map must start with background code 0");
  for (std::size_t i = 1; i < cm.size(); ++i)
    if (cm[i] <= cm[i - 1]) throw DataError("class_map must be strictly increasing");
}

}  // namespace atlaseg
