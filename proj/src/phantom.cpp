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
#include "atlaseg/phantom.hpp"

#include <cmath>
#include <string>

#include "atlaseg/rng.hpp"

namespace atlaseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// positions and radii as fractions of the grid extent, painted in order;
// the inner ventricle deliberately carves its cavity out of the shell
struct Structure {
  int class_id;
  Vector3d center;
  Vector3d radii;
};

const std::vector<Structure>& heart_structures() {
  static const std::vector<Structure> structures = {
      {1, {0.40, 0.40, 0.42}, {0.18, 0.18, 0.22}},    // myocardial shell (outer)
      {3, {0.40, 0.40, 0.42}, {0.108, 0.108, 0.132}}, // left ventricle cavity
      {5, {0.70, 0.40, 0.42}, {0.10, 0.14, 0.18}},    // right ventricle
      {2, {0.40, 0.72, 0.52}, {0.10, 0.10, 0.11}},    // left atrium
      {4, {0.70, 0.70, 0.48}, {0.09, 0.10, 0.11}},    // right atrium
      {6, {0.55, 0.58, 0.74}, {0.055, 0.055, 0.14}},  // aorta
      {7, {0.70, 0.56, 0.76}, {0.05, 0.05, 0.12}},    // pulmonary artery
  };
  return structures;
}

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 8) throw DataError("phantom needs at least 8 voxels per axis");
    if (!(spacing[a] > 0.0)) throw DataError("phantom spacing must be positive");
  }
  if (foreground_classes < 1 || foreground_classes > 7)
    throw DataError("phantom supports 1 to 7 foreground classes");
  if (static_cast<int>(class_means.size()) < foreground_classes)
    throw DataError("phantom needs one intensity mean per foreground class");
  if (noise_sigma < 0.0) throw DataError("noise sigma must be non-negative");

  std::vector<double> means(class_means.begin(), class_means.begin() + foreground_classes);
  means.push_back(background_mean);
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j)
      if (std::abs(means[i] - means[j]) < 2.0 * noise_sigma)
        throw DataError("class intensity means must be separated by at least two sigma");

  for (const Structure& s : heart_structures()) {
    if (s.class_id > foreground_classes) continue;
    for (int a = 0; a < 3; ++a) {
      const double n1 = dims[a] - 1;
      if ((s.center[a] - s.radii[a]) * n1 < 2.0 || (s.center[a] + s.radii[a]) * n1 > n1 - 2.0)
        throw DataError("infeasible phantom geometry: structure leaves the 2-voxel margin");
    }
  }
}

AtlasMember generate(const PhantomSpec& spec) {
  spec.validate();

  Grid3 grid;
  grid.dims = spec.dims;
  grid.spacing = spec.spacing;
  grid.origin = spec.origin;

  const ClassMap full_map = mmwhs_class_map();
  ClassMap class_map(full_map.begin(), full_map.begin() + spec.foreground_classes + 1);

  AtlasMember member;
  member.id = "phantom";
  member.labels = LabelVolume(grid, class_map);

  for (const Structure& s : heart_structures()) {
    if (s.class_id > spec.foreground_classes) continue;
    Vector3d c, r;
    for (int a = 0; a < 3; ++a) {
      c[a] = s.center[a] * (spec.dims[a] - 1);
      r[a] = s.radii[a] * (spec.dims[a] - 1);
    }
    const bool carves_shell = (s.class_id == 3);
    for (int k = 0; k < spec.dims[2]; ++k)
      for (int j = 0; j < spec.dims[1]; ++j)
        for (int i = 0; i < spec.dims[0]; ++i) {
          const double q = std::pow((i - c[0]) / r[0], 2) + std::pow((j - c[1]) / r[1], 2) +
                           std::pow((k - c[2]) / r[2], 2);
          if (q >= 1.0) continue;
          std::int32_t& cell = member.labels.data[static_cast<std::size_t>(grid.index(i, j, k))];
          if (cell != 0 && !(carves_shell && cell == 1))
            throw DataError("infeasible phantom geometry: structures overlap");
          cell = static_cast<std::int32_t>(s.class_id);
        }
  }

  member.intensity = ScalarVolume(grid);
  Rng rng(spec.seed);
  for (std::int64_t v = 0; v < member.intensity.data.size(); ++v) {
    const std::int32_t label = member.labels.data[static_cast<std::size_t>(v)];
    const double mean = (label == 0) ? spec.background_mean
                                     : spec.class_means[static_cast<std::size_t>(label - 1)];
    member.intensity.data[v] = mean + spec.noise_sigma * rng.normal();
  }
  return member;
}

PerturbResult perturb(const AtlasMember& member, std::uint64_t seed, const PerturbParams& params) {
  member.validate();
  const Grid3& grid = member.intensity.grid;
  for (int a = 0; a < 3; ++a)
    if (params.amplitude_voxels > grid.dims[a] / 8.0)
      throw DataError("deformation amplitude exceeds an eighth of the grid");

  Rng rng(seed);

  Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = Vector3d::UnitZ();
  axis.normalize();
  const double angle = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg) * kPi / 180.0;
  const Matrix3d rot = Eigen::AngleAxisd(angle, axis).toRotationMatrix();

  Vector3d scale;
  for (int a = 0; a < 3; ++a) scale[a] = rng.uniform(params.scale_lo, params.scale_hi);

  Vector3d translation;
  for (int a = 0; a < 3; ++a)
    translation[a] =
        rng.uniform(-params.max_translation_voxels, params.max_translation_voxels) * grid.spacing[a];

  const Vector3d center =
      grid.origin + (grid.spacing.array() * (grid.dims.cast<double>().array() - 1.0) * 0.5).matrix();

  TransformChain chain;
  chain.affine = AffineTransform::about_center(rot * scale.asDiagonal(), center, translation);

  FfdTransform ffd = FfdTransform::for_grid(grid, 8.0);
  for (std::int64_t r = 0; r < ffd.coefficients.rows(); ++r)
    for (int c = 0; c < 3; ++c) ffd.coefficients(r, c) = rng.normal();
  double max_norm = 0.0;
  for (std::int64_t r = 0; r < ffd.coefficients.rows(); ++r)
    max_norm = std::max(max_norm, ffd.coefficients.row(r).norm());
  const double target = params.amplitude_voxels * grid.spacing.minCoeff();
  ffd.coefficients *= (max_norm > 0.0) ? target / max_norm : 0.0;
  chain.ffd = std::move(ffd);

  PerturbResult out;
  out.transform = chain;
  out.member.id = member.id;
  out.member.intensity = resample(member.intensity, chain, grid, Interpolator::Cubic);
  out.member.labels = resample(member.labels, chain, grid, Interpolator::Nearest);
  return out;
}

PhantomDataset make_dataset(const PhantomSpec& spec, int n, const PerturbParams& params) {
  if (n < 1) throw DataError("dataset needs at least one member");

  PhantomSpec clean = spec;
  clean.noise_sigma = 0.0;
  const AtlasMember base = generate(clean);

  PhantomDataset out;
  out.members.reserve(static_cast<std::size_t>(n));
  out.transforms.reserve(static_cast<std::size_t>(n));

  Rng seeder(spec.seed);
  for (int m = 0; m < n; ++m) {
    const std::uint64_t warp_seed = seeder.fork();
    const std::uint64_t noise_seed = seeder.fork();

    PerturbResult p = perturb(base, warp_seed, params);
    p.member.id = "phantom" + std::to_string(m);

    Rng noise(noise_seed);
    for (std::int64_t v = 0; v < p.member.intensity.data.size(); ++v)
      p.member.intensity.data[v] += spec.noise_sigma * noise.normal();

    out.members.push_back(std::move(p.member));
    out.transforms.push_back(std::move(p.transform));
  }
  return out;
}

}  // namespace atlaseg
