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
#include "doctest.h"

#include "atlaseg/transform.hpp"
#include "atlaseg/volume.hpp"
#include "helpers.hpp"

#include <cmath>
#include <set>

using namespace atlaseg;
using namespace atlaseg::testing;

TEST_CASE("linear interpolation returns stored values at every grid node") {
  const ScalarVolume v = random_volume(make_grid(5, 4, 3), 42);
  const VolumeSampler s(v, Interpolator::Linear);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i)
        CHECK(s(Vector3d(i, j, k)) == doctest::Approx(v.at(i, j, k)).epsilon(1e-12));
}

TEST_CASE("cubic interpolation is node-exact") {
  const ScalarVolume v = random_volume(make_grid(6, 5, 4), 7);
  const VolumeSampler s(v, Interpolator::Cubic);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 6; ++i)
        CHECK(s(Vector3d(i, j, k)) == doctest::Approx(v.at(i, j, k)).epsilon(1e-9));
}

TEST_CASE("linear interpolation at the midpoint of 0 and 10 gives 5") {
  ScalarVolume v(make_grid(2, 1, 1));
  v.at(0, 0, 0) = 0.0;
  v.at(1, 0, 0) = 10.0;
  CHECK(sample(v, {0.5, 0.0, 0.0}, Interpolator::Linear) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("points outside the grid sample to the background constant") {
  const ScalarVolume v = random_volume(make_grid(4, 4, 4), 3, 10.0, 20.0);
  for (auto interp : {Interpolator::Nearest, Interpolator::Linear, Interpolator::Cubic}) {
    CHECK(sample(v, {-5.0, 1.0, 1.0}, interp) == 0.0);
    CHECK(sample(v, {1.0, 1.0, 40.0}, interp, -7.0) == -7.0);
  }
}

TEST_CASE("cubic interpolation reproduces a sampled cubic polynomial off the grid") {
  // The polynomial deviates from the spline's mirror boundary extension, which
  // leaks inward at ~0.27 per voxel, so probe points keep a 12-voxel margin
  // where the measured error is below 4e-6 on values of order 400.
  const auto poly = [](double x, double y, double z) {
    const double px = 0.02 * x * x * x - 0.3 * x * x + x + 5.0;
    const double py = -0.01 * y * y * y + 0.2 * y * y - 0.5 * y + 2.0;
    const double pz = 0.05 * z * z * z + 1.5 * z - 3.0;
    return px + py + pz + 0.001 * x * y * z;
  };
  ScalarVolume v(make_grid(32, 32, 32));
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) v.at(i, j, k) = poly(i, j, k);

  const VolumeSampler s(v, Interpolator::Cubic);
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const Vector3d p(rng.uniform(12.0, 19.0), rng.uniform(12.0, 19.0), rng.uniform(12.0, 19.0));
    CHECK(std::abs(s(p) - poly(p[0], p[1], p[2])) < 1e-4);
  }
}

TEST_CASE("identity resampling onto the same grid returns the input") {
  const ScalarVolume v = random_volume(make_grid(6, 5, 4, {1.5, 1.0, 2.0}, {3, -1, 0}), 9);
  for (auto interp : {Interpolator::Nearest, Interpolator::Linear, Interpolator::Cubic}) {
    const ScalarVolume out = resample(v, TransformChain::identity(), v.grid, interp);
    CHECK((out.data - v.data).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("resampling through a one-voxel translation shifts the volume") {
  const ScalarVolume v = random_volume(make_grid(8, 8, 8), 21);
  TransformChain t;
  t.affine.translation = Vector3d(1.0, 0.0, 0.0);  // spacing 1, so exactly one voxel
  const ScalarVolume out = resample(v, t, v.grid, Interpolator::Linear);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 7; ++i)
        CHECK(out.at(i, j, k) == doctest::Approx(v.at(i + 1, j, k)).epsilon(1e-12));
}

TEST_CASE("nearest-neighbor label resampling never invents a class id") {
  const ClassMap cm = mmwhs_class_map();
  LabelVolume v(make_grid(9, 9, 9), cm);
  Rng rng(5);
  for (auto& x : v.data) x = (rng.uniform() < 0.5) ? 0 : 3;  // only ids 0 and 3 present

  TransformChain t;
  t.affine = AffineTransform::about_center(
      Eigen::AngleAxisd(0.3, Vector3d::UnitZ()).toRotationMatrix(), Vector3d(4, 4, 4),
      Vector3d(0.7, -0.3, 0.2));
  const LabelVolume out = resample(v, t, v.grid, Interpolator::Nearest);

  std::set<std::int32_t> in_ids(v.data.begin(), v.data.end());
  in_ids.insert(0);  // out-of-domain points map to background
  for (auto x : out.data) CHECK(in_ids.count(x) == 1);
}

TEST_CASE("label resampling rejects non-nearest interpolators") {
  const LabelVolume v(make_grid(4, 4, 4), mmwhs_class_map());
  CHECK_THROWS_AS(resample(v, TransformChain::identity(), v.grid, Interpolator::Linear),
                  DataError);
}

TEST_CASE("single-level pyramid is the original volume") {
  const ScalarVolume v = random_volume(make_grid(8, 8, 8), 17);
  const auto levels = pyramid(v, 1);
  REQUIRE(levels.size() == 1);
  CHECK((levels[0].data - v.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("four-level pyramid of a 32-cube halves dims per level") {
  const ScalarVolume v = random_volume(make_grid(32, 32, 32), 2);
  const auto levels = pyramid(v, 4);
  REQUIRE(levels.size() == 4);
  const int expect[4] = {4, 8, 16, 32};
  for (int l = 0; l < 4; ++l)
    for (int a = 0; a < 3; ++a) CHECK(levels[l].grid.dims[a] == expect[l]);
  CHECK((levels[3].data - v.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("pyramid of a constant volume stays constant at every level") {
  const ScalarVolume v(make_grid(16, 16, 16), 42.5);
  for (const auto& level : pyramid(v, 3)) {
    CHECK(level.data.minCoeff() == doctest::Approx(42.5).epsilon(1e-12));
    CHECK(level.data.maxCoeff() == doctest::Approx(42.5).epsilon(1e-12));
  }
}

TEST_CASE("pyramid refuses levels that would shrink below 4 voxels per axis") {
  const ScalarVolume v = random_volume(make_grid(16, 16, 16), 1);
  CHECK_NOTHROW(pyramid(v, 3));
  CHECK_THROWS_AS(pyramid(v, 4), DataError);
}

TEST_CASE("gaussian smoothing preserves constants exactly at the borders") {
  const ScalarVolume v(make_grid(7, 6, 5), -3.25);
  const ScalarVolume out = gaussian_smooth(v, {2.0, 1.0, 0.8});
  CHECK((out.data - v.data).abs().maxCoeff() < 1e-12);
}

TEST_CASE("grid validation rejects empty dims and nonpositive spacing") {
  Grid3 g = make_grid(0, 4, 4);
  CHECK_THROWS_AS(g.validate(), DataError);
  g = make_grid(4, 4, 4, {1.0, 0.0, 1.0});
  CHECK_THROWS_AS(g.validate(), DataError);
}
