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
#include "helpers.hpp"

#include <cmath>

using namespace atlaseg;
using namespace atlaseg::testing;

namespace {

// Direct cubic B-spline basis, summed over every control point. Slow but
// independent of the windowed evaluation in FfdTransform.
Vector3d brute_force_displacement(const FfdTransform& t, const Vector3d& p) {
  Vector3d disp = Vector3d::Zero();
  const Vector3d g = (p - t.origin).cwiseQuotient(t.spacing);
  for (int k = 0; k < t.dims[2]; ++k)
    for (int j = 0; j < t.dims[1]; ++j)
      for (int i = 0; i < t.dims[0]; ++i) {
        const double w = bspline3(g[0] - i) * bspline3(g[1] - j) * bspline3(g[2] - k);
        if (w == 0.0) continue;
        disp += w * t.coefficients.row(t.control_index(i, j, k)).transpose();
      }
  return disp;
}

FfdTransform random_ffd(std::uint64_t seed, double amplitude = 2.0) {
  FfdTransform t = FfdTransform::for_grid(make_grid(16, 16, 16), 4.0);
  Rng rng(seed);
  for (Eigen::Index r = 0; r < t.coefficients.rows(); ++r)
    for (int a = 0; a < 3; ++a) t.coefficients(r, a) = rng.uniform(-amplitude, amplitude);
  return t;
}

}  // namespace

TEST_CASE("the identity affine maps points to themselves") {
  const AffineTransform t;
  CHECK((t.apply({1, 2, 3}) - Vector3d(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("a pure translation shifts the origin") {
  AffineTransform t;
  t.translation = Vector3d(1, 0, 0);
  CHECK((t.apply(Vector3d::Zero()) - Vector3d(1, 0, 0)).norm() == 0.0);
}

TEST_CASE("a quarter turn about z maps x onto y") {
  AffineTransform t;
  t.matrix = Eigen::AngleAxisd(M_PI / 2.0, Vector3d::UnitZ()).toRotationMatrix();
  CHECK((t.apply({1, 0, 0}) - Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("about_center keeps the center fixed up to the extra translation") {
  const Vector3d center(4, 5, 6);
  const Matrix3d rot = Eigen::AngleAxisd(0.7, Vector3d(1, 1, 0).normalized()).toRotationMatrix();
  const AffineTransform t = AffineTransform::about_center(rot, center, Vector3d(0.5, 0, -1));
  CHECK((t.apply(center) - (center + Vector3d(0.5, 0, -1))).norm() < 1e-12);
}

TEST_CASE("zero ffd coefficients displace nothing") {
  const FfdTransform t = FfdTransform::for_grid(make_grid(12, 12, 12), 4.0);
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    const Vector3d p(rng.uniform(0., 11.), rng.uniform(0., 11.), rng.uniform(0., 11.));
    CHECK(t.displacement(p).norm() == 0.0);
  }
}

TEST_CASE("constant coefficients displace by that constant inside the support") {
  FfdTransform t = FfdTransform::for_grid(make_grid(12, 12, 12), 4.0);
  t.coefficients.col(0).setConstant(1.5);
  t.coefficients.col(1).setConstant(-0.5);
  t.coefficients.col(2).setConstant(2.0);
  Rng rng(4);
  for (int n = 0; n < 50; ++n) {
    const Vector3d p(rng.uniform(1., 10.), rng.uniform(1., 10.), rng.uniform(1., 10.));
    CHECK((t.displacement(p) - Vector3d(1.5, -0.5, 2.0)).norm() < 1e-12);
  }
}

TEST_CASE("a single unit coefficient contributes the central weight cubed at its knot") {
  FfdTransform t = FfdTransform::for_grid(make_grid(16, 16, 16), 4.0);
  const int ci = t.dims[0] / 2, cj = t.dims[1] / 2, ck = t.dims[2] / 2;
  t.coefficients(t.control_index(ci, cj, ck), 0) = 1.0;
  const Vector3d knot = t.origin + Vector3d(ci, cj, ck).cwiseProduct(t.spacing);

  const double w0 = bspline3(0.0);  // 2/3
  CHECK(t.displacement(knot)[0] == doctest::Approx(w0 * w0 * w0).epsilon(1e-12));
  CHECK(t.displacement(knot)[0] == doctest::Approx(8.0 / 27.0).epsilon(1e-12));
  CHECK((t.displacement(knot) - brute_force_displacement(t, knot)).norm() < 1e-12);
}

TEST_CASE("windowed ffd evaluation matches full basis summation") {
  const FfdTransform t = random_ffd(8);
  Rng rng(9);
  const Vector3d lo = t.origin + 1.5 * t.spacing;
  const Vector3d hi = t.origin + (t.dims.cast<double>() - Vector3d::Constant(2.5)).cwiseProduct(t.spacing);
  for (int n = 0; n < 100; ++n) {
    const Vector3d p(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                     rng.uniform(lo[2], hi[2]));
    CHECK((t.displacement(p) - brute_force_displacement(t, p)).norm() < 1e-12);
  }
}

TEST_CASE("tensor b-spline weights form a partition of unity") {
  const FfdTransform t = random_ffd(12);
  Rng rng(13);
  const Vector3d lo = t.origin + 1.5 * t.spacing;
  const Vector3d hi = t.origin + (t.dims.cast<double>() - Vector3d::Constant(2.5)).cwiseProduct(t.spacing);
  for (int n = 0; n < 100; ++n) {
    const Vector3d p(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                     rng.uniform(lo[2], hi[2]));
    double sum = 0.0;
    const bool supported = t.for_each_support_weight(p, [&](std::int64_t, double w) { sum += w; });
    REQUIRE(supported);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("a chain applies the affine plus the ffd displacement") {
  TransformChain chain;
  chain.affine = AffineTransform::about_center(
      Eigen::AngleAxisd(0.4, Vector3d::UnitY()).toRotationMatrix(), Vector3d(8, 8, 8),
      Vector3d(1, 2, 3));
  chain.ffd = random_ffd(21);
  Rng rng(22);
  for (int n = 0; n < 100; ++n) {
    const Vector3d p(rng.uniform(2., 14.), rng.uniform(2., 14.), rng.uniform(2., 14.));
    const Vector3d expect =
        chain.affine.matrix * p + chain.affine.translation + brute_force_displacement(*chain.ffd, p);
    CHECK((chain.apply(p) - expect).norm() < 1e-12);
  }
}

TEST_CASE("a chain without an ffd is the affine alone") {
  TransformChain chain;
  chain.affine.translation = Vector3d(0.5, -1, 2);
  CHECK((chain.apply({1, 1, 1}) - Vector3d(1.5, 0, 3)).norm() == 0.0);
}

TEST_CASE("ffd refinement halves the knot spacing and keeps the field") {
  const FfdTransform t = random_ffd(31);
  const FfdTransform r = t.refined();
  CHECK((r.spacing - 0.5 * t.spacing).norm() < 1e-12);
  Rng rng(32);
  const Vector3d lo = t.origin + 1.5 * t.spacing;
  const Vector3d hi = t.origin + (t.dims.cast<double>() - Vector3d::Constant(2.5)).cwiseProduct(t.spacing);
  for (int n = 0; n < 100; ++n) {
    const Vector3d p(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                     rng.uniform(lo[2], hi[2]));
    CHECK((r.displacement(p) - t.displacement(p)).norm() < 1e-10);
  }
}

TEST_CASE("transform chains serialize and deserialize losslessly") {
  TransformChain chain;
  chain.affine = AffineTransform::about_center(
      Eigen::AngleAxisd(-0.3, Vector3d::UnitX()).toRotationMatrix(), Vector3d(1, 2, 3),
      Vector3d(0.25, -0.125, 3.5));
  chain.ffd = random_ffd(41);

  const TransformChain back = deserialize_transform(serialize(chain));
  Rng rng(42);
  for (int n = 0; n < 100; ++n) {
    const Vector3d p(rng.uniform(-5., 20.), rng.uniform(-5., 20.), rng.uniform(-5., 20.));
    CHECK((back.apply(p) - chain.apply(p)).norm() == 0.0);
  }
}

TEST_CASE("an identity chain serializes without an ffd block") {
  const std::string doc = serialize(TransformChain::identity());
  CHECK(doc.find("\"ffd\"") == std::string::npos);
  const TransformChain back = deserialize_transform(doc);
  CHECK(!back.ffd.has_value());
  CHECK((back.apply({3, 4, 5}) - Vector3d(3, 4, 5)).norm() == 0.0);
}

TEST_CASE("malformed transform documents are rejected") {
  CHECK_THROWS_AS(deserialize_transform("{}"), DataError);
  CHECK_THROWS_AS(deserialize_transform("{\"version\": 1, \"affine\": {}}"), DataError);
  CHECK_THROWS_AS(deserialize_transform("not json"), DataError);
  CHECK_THROWS_AS(
      deserialize_transform(
          "{\"version\": 99, \"affine\": {\"matrix\": [1,0,0,0,1,0,0,0,1], "
          "\"translation\": [0,0,0]}}"),
      DataError);
}

TEST_CASE("transform files round trip through save and load") {
  TempDir tmp("transform_rt");
  TransformChain chain;
  chain.affine.translation = Vector3d(1.5, 2.5, -3.5);
  chain.ffd = random_ffd(51);
  save_transform(chain, tmp.file("t.json"));
  const TransformChain back = load_transform(tmp.file("t.json"));
  Rng rng(52);
  for (int n = 0; n < 50; ++n) {
    const Vector3d p(rng.uniform(0., 16.), rng.uniform(0., 16.), rng.uniform(0., 16.));
    CHECK((back.apply(p) - chain.apply(p)).norm() == 0.0);
  }
}

TEST_CASE("ffd validation rejects degenerate control grids") {
  FfdTransform t = FfdTransform::for_grid(make_grid(12, 12, 12), 4.0);
  CHECK_NOTHROW(t.validate());
  t.dims[0] = 3;
  CHECK_THROWS_AS(t.validate(), DataError);
}
