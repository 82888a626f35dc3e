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

#include <utility>
#include <vector>

namespace atlaseg {

struct TransformChain;  // transform.hpp

/// 3D grid of real intensities, x-fastest storage. Immutable after construction
/// in pipeline use; intensities are always finite doubles.
struct ScalarVolume {
  Grid3 grid;
  ArrayXd data;  // grid.voxel_count() values

  ScalarVolume() = default;
  ScalarVolume(const Grid3& g, double fill = 0.0) : grid(g), data(ArrayXd::Constant(g.voxel_count(), fill)) {
    grid.validate();
  }

  double& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
  double at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }

  void validate() const;
};

/// 3D grid of compact class ids (0 = background). The class_map maps ids back
/// to raw file codes, e.g. the MM-WHS codes 205/420/500/550/600/820/850.
struct LabelVolume {
  Grid3 grid;
  std::vector<std::int32_t> data;
  ClassMap class_map;

  LabelVolume() = default;
  LabelVolume(const Grid3& g, ClassMap cm)
      : grid(g), data(static_cast<std::size_t>(g.voxel_count()), 0), class_map(std::move(cm)) {
    grid.validate();
    validate_class_map(class_map);
  }

  int num_classes() const { return static_cast<int>(class_map.size()); }  // K+1 incl. background
  std::int32_t& at(int i, int j, int k) { return data[static_cast<std::size_t>(grid.index(i, j, k))]; }
  std::int32_t at(int i, int j, int k) const { return data[static_cast<std::size_t>(grid.index(i, j, k))]; }

  void validate() const;
};

enum class Interpolator {
  Nearest,  // mandatory for label resampling
  Linear,   // order-1 B-spline
  Cubic,    // order-3 B-spline with prefiltered coefficients (node-exact)
};

/// Samples one volume repeatedly. Construction runs the cubic prefilter once,
/// so resampling loops and metric evaluations stay O(taps) per point.
/// Points outside the grid evaluate to the background constant.
class VolumeSampler {
public:
  VolumeSampler(const ScalarVolume& vol, Interpolator interp, double background = 0.0);

  /// Value at a continuous voxel coordinate.
  double operator()(const Vector3d& voxel_pt) const;

  /// Value and spatial gradient (per voxel unit) at a continuous voxel coordinate.
  /// Nearest returns a zero gradient.
  std::pair<double, Vector3d> value_and_gradient(const Vector3d& voxel_pt) const;

  const Grid3& grid() const { return grid_; }
  double background() const { return background_; }

private:
  Grid3 grid_;
  ArrayXd coeffs_;  // raw values (nearest/linear) or prefiltered B-spline coefficients (cubic)
  Interpolator interp_;
  double background_;
};

/// One-off interpolation at a continuous voxel coordinate. Prefer VolumeSampler
/// inside loops; this prefilters per call for cubic.
double sample(const ScalarVolume& vol, const Vector3d& voxel_pt, Interpolator interp,
              double background = 0.0);

/// Pull-back resampling: output voxel n takes vol sampled at transform(world(n)).
ScalarVolume resample(const ScalarVolume& vol, const TransformChain& transform, const Grid3& ref_grid,
                      Interpolator interp, double background = 0.0);

/// Label resampling; interp must be Nearest. Outside the grid maps to background id 0.
LabelVolume resample(const LabelVolume& vol, const TransformChain& transform, const Grid3& ref_grid,
                     Interpolator interp);

/// Separable Gaussian smoothing, sigma in voxels per axis. The truncated kernel
/// is renormalized at the borders, so constants are preserved exactly.
ScalarVolume gaussian_smooth(const ScalarVolume& vol, const Vector3d& sigma_voxels);

/// Coarse-to-fine pyramid: level 0 is the coarsest, the last level is the
/// original volume. Level l is smoothed with sigma 0.5 * 2^(L-1-l) voxels and
/// decimated by 2^(L-1-l). Throws if the coarsest level would drop below 4
/// voxels on any axis.
std::vector<ScalarVolume> pyramid(const ScalarVolume& vol, int levels);

}  // namespace atlaseg
