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

#include "atlaseg/phantom.hpp"
#include "atlaseg/registration.hpp"
#include "helpers.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace atlaseg;
using namespace atlaseg::testing;

namespace {

// Marginal entropy over the same sample stream and box binning the metric
// uses: two pad bins per side, values clamped to the data range.
double entropy_oracle(const ScalarVolume& v, int bins, int samples, std::uint64_t seed) {
  const double lo = v.data.minCoeff();
  const double hi = v.data.maxCoeff();
  const double binsize = (hi - lo) / static_cast<double>(bins - 4);
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    const auto idx = static_cast<Eigen::Index>(rng.uniform_index(
        static_cast<std::uint64_t>(v.grid.voxel_count())));
    const double t = std::clamp(v.data[idx], lo, hi) / binsize - (lo / binsize - 2.0);
    const int b = std::clamp(static_cast<int>(std::floor(t + 0.5)), 0, bins - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) {
      const double p = c / samples;
      h -= p * std::log(p);
    }
  return h;
}

double mi_value(const ScalarVolume& fixed, const ScalarVolume& moving, const MiConfig& cfg,
                std::uint64_t seed) {
  const Vector3d center = fixed.grid.world((fixed.grid.dims.cast<double>() -
                                            Vector3d::Ones()) * 0.5);
  return -mutual_information(fixed, moving, TransformChain::identity(), WrtParams::Affine, cfg,
                             seed, center)
              .value;
}

double mean_displacement(const TransformChain& t, const TransformChain& truth, const Grid3& g) {
  double sum = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vector3d w = g.world(i, j, k);
        sum += (t.apply(w) - truth.apply(w)).norm();
      }
  return sum / static_cast<double>(g.voxel_count());
}

}  // namespace

TEST_CASE("self mutual information equals the marginal entropy under box windows") {
  const ScalarVolume v = smooth_random_volume(make_grid(12, 12, 12), 71);
  MiConfig cfg;
  cfg.fixed_parzen_order = 0;
  cfg.moving_parzen_order = 0;
  cfg.samples_per_iter = 4096;
  cfg.background = v.data.minCoeff();  // identical binning ranges on both axes

  const double mi = mi_value(v, v, cfg, 5);
  const double h = entropy_oracle(v, cfg.bins, cfg.samples_per_iter, 5);
  CHECK(mi == doctest::Approx(h).epsilon(1e-10));
}

TEST_CASE("independent noise has near-zero mutual information") {
  MiConfig cfg;
  cfg.samples_per_iter = 10000;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ScalarVolume fixed = random_volume(make_grid(16, 16, 16), 1000 + s);
    const ScalarVolume moving = random_volume(make_grid(16, 16, 16), 5000 + s);
    worst = std::max(worst, mi_value(fixed, moving, cfg, 7000 + s));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("mutual information is symmetric in its arguments") {
  ScalarVolume a = smooth_random_volume(make_grid(10, 10, 10), 81);
  ScalarVolume b = smooth_random_volume(make_grid(10, 10, 10), 82);
  a.data -= a.data.minCoeff();  // both ranges become [0, max], matching the
  b.data -= b.data.minCoeff();  // background-padded moving axis exactly

  for (int order : {1, 3}) {
    MiConfig cfg;
    cfg.fixed_parzen_order = order;
    cfg.moving_parzen_order = order;
    cfg.samples_per_iter = 2048;
    CHECK(std::abs(mi_value(a, b, cfg, 11) - mi_value(b, a, cfg, 11)) < 1e-6);
  }
}

TEST_CASE("mutual information is invariant under monotone intensity relabeling") {
  const ScalarVolume fixed = smooth_random_volume(make_grid(10, 10, 10), 91);
  const ScalarVolume moving = smooth_random_volume(make_grid(10, 10, 10), 92);
  MiConfig cfg;
  cfg.samples_per_iter = 2048;
  const double base = mi_value(fixed, moving, cfg, 13);

  ScalarVolume f2 = fixed, m2 = moving;
  f2.data *= 2.0;  // power-of-two scaling leaves every bin term bit-identical
  m2.data *= 2.0;
  CHECK(std::abs(mi_value(f2, m2, cfg, 13) - base) < 1e-12);

  ScalarVolume f3 = fixed, m3 = moving;
  f3.data = fixed.data * 3.0 - 1.0;
  m3.data = moving.data * 3.0;  // keeps the background at the range bottom
  CHECK(std::abs(mi_value(f3, m3, cfg, 13) - base) < 1e-10);
}

TEST_CASE("analytic mutual information gradients match finite differences") {
  const ScalarVolume fixed = smooth_random_volume(make_grid(8, 8, 8), 102);
  const ScalarVolume moving = smooth_random_volume(make_grid(8, 8, 8), 202);
  const Vector3d center = fixed.grid.world(3, 3, 3);
  MiConfig mi;
  mi.samples_per_iter = 256;

  Rng rng(302);
  Matrix3d lin = Matrix3d::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) lin(r, c) += 0.05 * rng.normal();
  TransformChain chain;
  chain.affine = AffineTransform::about_center(
      lin, center, {0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal()});
  FfdTransform ffd = FfdTransform::for_grid(fixed.grid, 4.0);
  for (Eigen::Index r = 0; r < ffd.coefficients.rows(); ++r)
    for (int c = 0; c < 3; ++c) ffd.coefficients(r, c) = 0.3 * rng.normal();
  chain.ffd = ffd;
  const std::uint64_t seed = 902;

  SUBCASE("affine block") {
    const double h = 1e-5;
    const MiValueGrad vg =
        mutual_information(fixed, moving, chain, WrtParams::Affine, mi, seed, center);
    VectorXd p(12);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p[3 * r + c] = lin(r, c);
    p.tail(3) = chain.affine.translation + (lin - Matrix3d::Identity()) * center;

    const auto value_at = [&](const VectorXd& q) {
      Matrix3d m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = q[3 * r + c];
      TransformChain t;
      t.affine = AffineTransform::about_center(m, center, {q[9], q[10], q[11]});
      t.ffd = chain.ffd;
      return mutual_information(fixed, moving, t, WrtParams::Affine, mi, seed, center).value;
    };
    CHECK(value_at(p) == doctest::Approx(vg.value).epsilon(1e-12));
    for (int i = 0; i < 12; ++i) {
      VectorXd q = p;
      q[i] += h;
      const double fp = value_at(q);
      q[i] -= 2 * h;
      const double fm = value_at(q);
      const double fd = (fp - fm) / (2 * h);
      const double rel =
          std::abs(fd - vg.gradient[i]) / std::max({std::abs(fd), std::abs(vg.gradient[i]), 1e-8});
      CHECK(rel < 5e-4);
    }
  }

  SUBCASE("ffd block") {
    const double h = 1e-4;
    const MiValueGrad vg =
        mutual_information(fixed, moving, chain, WrtParams::Ffd, mi, seed, center);
    const auto value_at = [&](Eigen::Index row, int axis, double delta) {
      TransformChain t = chain;
      t.ffd->coefficients(row, axis) += delta;
      return mutual_information(fixed, moving, t, WrtParams::Ffd, mi, seed, center).value;
    };
    REQUIRE(vg.gradient.size() == 3 * ffd.control_count());
    for (Eigen::Index row = 0; row < ffd.coefficients.rows(); ++row)
      for (int axis = 0; axis < 3; ++axis) {
        const double fd = (value_at(row, axis, h) - value_at(row, axis, -h)) / (2 * h);
        const double g = vg.gradient[3 * row + axis];
        const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
        CHECK(rel < 1e-3);
      }
  }
}

TEST_CASE("degenerate intensity configurations raise numeric errors") {
  const ScalarVolume noise = smooth_random_volume(make_grid(8, 8, 8), 61);
  const ScalarVolume flat(make_grid(8, 8, 8), 7.0);
  MiConfig cfg;
  cfg.samples_per_iter = 256;
  const Vector3d center(3.5, 3.5, 3.5);

  CHECK_THROWS_AS(mutual_information(flat, noise, TransformChain::identity(), WrtParams::Affine,
                                     cfg, 1, center),
                  NumericError);
  CHECK_THROWS_AS(mutual_information(noise, flat, TransformChain::identity(), WrtParams::Affine,
                                     cfg, 1, center),
                  NumericError);

  TransformChain far_away;
  far_away.affine.translation = Vector3d(1000, 0, 0);  // no overlap: constant background
  CHECK_THROWS_AS(
      mutual_information(noise, noise, far_away, WrtParams::Affine, cfg, 1, center),
      NumericError);
}

TEST_CASE("metric and optimizer configurations are validated") {
  MiConfig mi;
  mi.bins = 4;
  CHECK_THROWS_AS(mi.validate(), DataError);
  mi = MiConfig{};
  mi.samples_per_iter = 100;
  CHECK_THROWS_AS(mi.validate(), DataError);
  mi = MiConfig{};
  mi.moving_parzen_order = 2;
  CHECK_THROWS_AS(mi.validate(), DataError);

  AsgdConfig asgd;
  asgd.alpha = 0.4;
  CHECK_THROWS_AS(asgd.validate(), DataError);
  asgd = AsgdConfig{};
  asgd.big_a = 0.0;
  CHECK_THROWS_AS(asgd.validate(), DataError);

  RegistrationConfig reg;
  reg.levels = 0;
  CHECK_THROWS_AS(reg.validate(), DataError);
}

TEST_CASE("stochastic descent solves a quadratic bowl") {
  const Vector3d target(2.0, -1.0, 0.5);
  const CostAndGradFn cost = [&](const VectorXd& p, int) {
    const Vector3d d = p.head<3>() - target;
    return std::make_pair(d.squaredNorm(), VectorXd(2.0 * d));
  };
  AsgdConfig cfg;
  const VectorXd start = VectorXd::Constant(3, 5.0);
  const AsgdResult res = asgd_minimize(cost, start, cfg);
  CHECK((res.params.head<3>() - target).norm() < 1e-2);
  CHECK(res.trace.size() == 500);
  CHECK(res.trace.back() < res.trace.front());
}

TEST_CASE("zero gradients leave the parameters untouched") {
  const CostAndGradFn cost = [](const VectorXd& p, int) {
    return std::make_pair(1.0, VectorXd(VectorXd::Zero(p.size())));
  };
  const VectorXd start = VectorXd::LinSpaced(5, -2.0, 2.0);
  const AsgdResult res = asgd_minimize(cost, start, AsgdConfig{});
  CHECK((res.params - start).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the optimizer trajectory is deterministic") {
  const CostAndGradFn cost = [](const VectorXd& p, int iter) {
    const double wobble = std::sin(0.7 * iter);
    return std::make_pair(p.squaredNorm() + wobble, VectorXd(2.0 * p));
  };
  const VectorXd start = VectorXd::Constant(4, 3.0);
  const AsgdResult a = asgd_minimize(cost, start, AsgdConfig{});
  const AsgdResult b = asgd_minimize(cost, start, AsgdConfig{});
  CHECK((a.params - b.params).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.trace == b.trace);
}

TEST_CASE("non-finite gradients abort the optimization") {
  const CostAndGradFn cost = [](const VectorXd& p, int) {
    return std::make_pair(0.0, VectorXd(VectorXd::Constant(p.size(),
                                                           std::numeric_limits<double>::quiet_NaN())));
  };
  CHECK_THROWS_AS(asgd_minimize(cost, VectorXd::Zero(3), AsgdConfig{}), NumericError);
}

TEST_CASE("registering an image onto itself stays near the identity") {
  PhantomSpec spec;
  spec.seed = 3;
  const AtlasMember member = generate(spec);
  RegistrationConfig cfg;
  cfg.levels = 3;
  cfg.seed = 5;
  const RegistrationResult res = register_pair(member.intensity, member.intensity, cfg);
  CHECK(mean_displacement(res.transform, TransformChain::identity(), member.intensity.grid) < 0.1);
}

TEST_CASE("a known translation is recovered and costs trend downward") {
  PhantomSpec spec;
  spec.seed = 8;
  const AtlasMember member = generate(spec);
  TransformChain shift;
  shift.affine.translation = Vector3d(3.0, 0.0, 0.0);
  const ScalarVolume moving =
      resample(member.intensity, shift, member.intensity.grid, Interpolator::Cubic);

  RegistrationConfig cfg;
  cfg.levels = 3;
  cfg.stages = {Stage::Affine};
  cfg.seed = 9;
  const RegistrationResult res = register_pair(member.intensity, moving, cfg);

  TransformChain truth;
  truth.affine.translation = Vector3d(-3.0, 0.0, 0.0);
  CHECK(mean_displacement(res.transform, truth, member.intensity.grid) < 0.5);

  REQUIRE(!res.report.stages.empty());
  CHECK(res.report.levels == 3);
  CHECK(res.report.elapsed_seconds > 0.0);
  for (const StageTrace& st : res.report.stages) {
    REQUIRE(st.trace.size() >= 10);
    const std::size_t tenth = st.trace.size() / 10;
    const double first = std::accumulate(st.trace.begin(), st.trace.begin() + tenth, 0.0);
    const double last = std::accumulate(st.trace.end() - tenth, st.trace.end(), 0.0);
    CHECK(last <= first);
  }

  const auto j = nlohmann::json::parse(res.report.to_json());
  CHECK(j.at("levels").get<int>() == 3);
  CHECK(j.at("stages").is_array());
}
