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
#include "atlaseg/volume.hpp"

#include "atlaseg/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace atlaseg {

void ScalarVolume::validate() const {
  grid.validate();
  if (data.size() != grid.voxel_count()) throw DataError("volume data size does not match dims");
  if (!data.allFinite()) throw DataError("volume contains non-finite intensities");
}

void LabelVolume::validate() const {
  grid.validate();
  validate_class_map(class_map);
  if (static_cast<std::int64_t>(data.size()) != grid.voxel_count())
    throw DataError("label data size does not match dims");
  const std::int32_t k_max = static_cast<std::int32_t>(class_map.size()) - 1;
  for (const std::int32_t v : data)
    if (v < 0 || v > k_max) throw DataError("label id out of range [0, K]");
}

namespace {

// Unser-style recursive prefilter turning samples into cubic B-spline
// interpolation coefficients, mirror boundary. Pole z1 = sqrt(3) - 2.
constexpr double kCubicPole = -0.26794919243112270647;

void prefilter_line(double* c, std::int64_t n, std::int64_t stride) {
  if (n == 1) return;
  const double z = kCubicPole;
  const double lambda = (1.0 - z) * (1.0 - 1.0 / z);
  for (std::int64_t i = 0; i < n; ++i) c[i * stride] *= lambda;

  // causal init: geometric sum over the mirrored signal, truncated once the
  // terms drop below machine precision, exact over one period for short lines
  const std::int64_t horizon =
      static_cast<std::int64_t>(std::ceil(std::log(1e-16) / std::log(std::abs(z))));
  double sum;
  if (horizon < n) {
    sum = c[0];
    double zn = z;
    for (std::int64_t i = 1; i < horizon; ++i) {
      sum += zn * c[i * stride];
      zn *= z;
    }
  } else {
    double zn = z;
    const double iz = 1.0 / z;
    double z2n = std::pow(z, static_cast<double>(n - 1));
    sum = c[0] + z2n * c[(n - 1) * stride];
    z2n *= z2n * iz;
    for (std::int64_t i = 1; i <= n - 2; ++i) {
      sum += (zn + z2n) * c[i * stride];
      zn *= z;
      z2n *= iz;
    }
    sum /= 1.0 - std::pow(z, static_cast<double>(2 * n - 2));
  }
  c[0] = sum;
  for (std::int64_t i = 1; i < n; ++i) c[i * stride] += z * c[(i - 1) * stride];

  c[(n - 1) * stride] =
      (z / (z * z - 1.0)) * (z * c[(n - 2) * stride] + c[(n - 1) * stride]);
  for (std::int64_t i = n - 2; i >= 0; --i)
    c[i * stride] = z * (c[(i + 1) * stride] - c[i * stride]);
}

ArrayXd cubic_prefilter(const ScalarVolume& vol) {
  ArrayXd c = vol.data;
  const auto& d = vol.grid.dims;
  const std::int64_t nx = d[0], ny = d[1], nz = d[2];
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j) prefilter_line(c.data() + nx * (j + ny * k), nx, 1);
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t i = 0; i < nx; ++i) prefilter_line(c.data() + i + nx * ny * k, ny, nx);
  for (std::int64_t j = 0; j < ny; ++j)
    for (std::int64_t i = 0; i < nx; ++i) prefilter_line(c.data() + i + nx * j, nz, nx * ny);
  return c;
}

inline std::array<double, 2> linear_weights(double u) { return {1.0 - u, u}; }

// Whole-sample mirror fold, matching the prefilter boundary condition.
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return (i < n) ? i : period - i;
}

inline bool inside_domain(const Vector3d& p, const Vector3i& d) {
  for (int a = 0; a < 3; ++a)
    if (!(p[a] >= 0.0 && p[a] <= d[a] - 1)) return false;
  return true;
}

// C1 weight: 1 on the node hull [0, n-1], smoothstep to 0 one voxel outside.
// Keeps interpolation node-exact inside while fading to the background
// constant without the jump that would break gradient-based optimization.
inline double edge_weight(double x, int n, double& deriv) {
  deriv = 0.0;
  double u;
  if (x >= 0.0) {
    const double over = x - (n - 1);
    if (over <= 0.0) return 1.0;
    if (over >= 1.0) return 0.0;
    u = 1.0 - over;
    deriv = -6.0 * u * (1.0 - u);
  } else {
    if (x <= -1.0) return 0.0;
    u = x + 1.0;
    deriv = 6.0 * u * (1.0 - u);
  }
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace

VolumeSampler::VolumeSampler(const ScalarVolume& vol, Interpolator interp, double background)
    : grid_(vol.grid), interp_(interp), background_(background) {
  coeffs_ = (interp == Interpolator::Cubic) ? cubic_prefilter(vol) : vol.data;
}

double VolumeSampler::operator()(const Vector3d& p) const {
  const auto& d = grid_.dims;
  switch (interp_) {
    case Interpolator::Nearest: {
      if (!inside_domain(p, d)) return background_;
      const int i = static_cast<int>(std::floor(p[0] + 0.5));
      const int j = static_cast<int>(std::floor(p[1] + 0.5));
      const int k = static_cast<int>(std::floor(p[2] + 0.5));
      return coeffs_[grid_.index(i, j, k)];
    }
    case Interpolator::Linear: {
      double dummy;
      const double ew = edge_weight(p[0], d[0], dummy) * edge_weight(p[1], d[1], dummy) *
                        edge_weight(p[2], d[2], dummy);
      if (ew == 0.0) return background_;
      int base[3];
      double w[3][2];
      for (int a = 0; a < 3; ++a) {
        const double f = std::floor(p[a]);
        base[a] = static_cast<int>(f);
        const auto lw = linear_weights(p[a] - f);
        w[a][0] = lw[0];
        w[a][1] = lw[1];
      }
      double acc = 0.0;
      for (int c = 0; c < 2; ++c)
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a) {
            const double wt = w[0][a] * w[1][b] * w[2][c];
            if (wt == 0.0) continue;
            const int i = std::clamp(base[0] + a, 0, d[0] - 1);
            const int j = std::clamp(base[1] + b, 0, d[1] - 1);
            const int k = std::clamp(base[2] + c, 0, d[2] - 1);
            acc += wt * coeffs_[grid_.index(i, j, k)];
          }
      return ew * acc + (1.0 - ew) * background_;
    }
    case Interpolator::Cubic: {
      double dummy;
      const double ew = edge_weight(p[0], d[0], dummy) * edge_weight(p[1], d[1], dummy) *
                        edge_weight(p[2], d[2], dummy);
      if (ew == 0.0) return background_;
      int base[3];
      std::array<double, 4> w[3];
      for (int a = 0; a < 3; ++a) {
        const double f = std::floor(p[a]);
        base[a] = static_cast<int>(f);
        w[a] = bspline3_weights(p[a] - f);
      }
      double acc = 0.0;
      for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b)
          for (int a = 0; a < 4; ++a) {
            const int i = mirror_index(base[0] - 1 + a, d[0]);
            const int j = mirror_index(base[1] - 1 + b, d[1]);
            const int k = mirror_index(base[2] - 1 + c, d[2]);
            acc += w[0][a] * w[1][b] * w[2][c] * coeffs_[grid_.index(i, j, k)];
          }
      return ew * acc + (1.0 - ew) * background_;
    }
  }
  return background_;
}

std::pair<double, Vector3d> VolumeSampler::value_and_gradient(const Vector3d& p) const {
  const auto& d = grid_.dims;
  if (interp_ == Interpolator::Nearest) return {(*this)(p), Vector3d::Zero()};

  double ew[3], dew[3];
  for (int a = 0; a < 3; ++a) ew[a] = edge_weight(p[a], d[a], dew[a]);
  const double W = ew[0] * ew[1] * ew[2];
  if (W == 0.0) return {background_, Vector3d::Zero()};

  double value = 0.0;
  Vector3d grad = Vector3d::Zero();
  if (interp_ == Interpolator::Linear) {
    int base[3];
    double w[3][2], dw[3][2];
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor(p[a]);
      base[a] = static_cast<int>(f);
      const double u = p[a] - f;
      w[a][0] = 1.0 - u;
      w[a][1] = u;
      dw[a][0] = -1.0;
      dw[a][1] = 1.0;
    }
    for (int c = 0; c < 2; ++c)
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          const int i = std::clamp(base[0] + a, 0, d[0] - 1);
          const int j = std::clamp(base[1] + b, 0, d[1] - 1);
          const int k = std::clamp(base[2] + c, 0, d[2] - 1);
          const double v = coeffs_[grid_.index(i, j, k)];
          value += w[0][a] * w[1][b] * w[2][c] * v;
          grad[0] += dw[0][a] * w[1][b] * w[2][c] * v;
          grad[1] += w[0][a] * dw[1][b] * w[2][c] * v;
          grad[2] += w[0][a] * w[1][b] * dw[2][c] * v;
        }
  } else {
    int base[3];
    std::array<double, 4> w[3], dw[3];
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor(p[a]);
      base[a] = static_cast<int>(f);
      const double u = p[a] - f;
      w[a] = bspline3_weights(u);
      dw[a] = bspline3_derivative_weights(u);
    }
    for (int c = 0; c < 4; ++c)
      for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) {
          const int i = mirror_index(base[0] - 1 + a, d[0]);
          const int j = mirror_index(base[1] - 1 + b, d[1]);
          const int k = mirror_index(base[2] - 1 + c, d[2]);
          const double v = coeffs_[grid_.index(i, j, k)];
          value += w[0][a] * w[1][b] * w[2][c] * v;
          grad[0] += dw[0][a] * w[1][b] * w[2][c] * v;
          grad[1] += w[0][a] * dw[1][b] * w[2][c] * v;
          grad[2] += w[0][a] * w[1][b] * dw[2][c] * v;
        }
  }
  if (W == 1.0) return {value, grad};
  const Vector3d dW(dew[0] * ew[1] * ew[2], ew[0] * dew[1] * ew[2], ew[0] * ew[1] * dew[2]);
  return {W * value + (1.0 - W) * background_, dW * (value - background_) + W * grad};
}

double sample(const ScalarVolume& vol, const Vector3d& voxel_pt, Interpolator interp, double background) {
  return VolumeSampler(vol, interp, background)(voxel_pt);
}

ScalarVolume resample(const ScalarVolume& vol, const TransformChain& transform, const Grid3& ref_grid,
                      Interpolator interp, double background) {
  ref_grid.validate();
  const VolumeSampler sampler(vol, interp, background);
  ScalarVolume out(ref_grid);
  std::int64_t n = 0;
  for (int k = 0; k < ref_grid.dims[2]; ++k)
    for (int j = 0; j < ref_grid.dims[1]; ++j)
      for (int i = 0; i < ref_grid.dims[0]; ++i, ++n) {
        const Vector3d q = transform.apply(ref_grid.world(i, j, k));
        out.data[n] = sampler(vol.grid.voxel(q));
      }
  return out;
}

LabelVolume resample(const LabelVolume& vol, const TransformChain& transform, const Grid3& ref_grid,
                     Interpolator interp) {
  if (interp != Interpolator::Nearest)
    throw DataError("label volumes must be resampled with nearest-neighbor interpolation");
  ref_grid.validate();
  LabelVolume out(ref_grid, vol.class_map);
  const auto& d = vol.grid.dims;
  std::int64_t n = 0;
  for (int k = 0; k < ref_grid.dims[2]; ++k)
    for (int j = 0; j < ref_grid.dims[1]; ++j)
      for (int i = 0; i < ref_grid.dims[0]; ++i, ++n) {
        const Vector3d p = vol.grid.voxel(transform.apply(ref_grid.world(i, j, k)));
        const int si = static_cast<int>(std::floor(p[0] + 0.5));
        const int sj = static_cast<int>(std::floor(p[1] + 0.5));
        const int sk = static_cast<int>(std::floor(p[2] + 0.5));
        out.data[static_cast<std::size_t>(n)] =
            (si < 0 || sj < 0 || sk < 0 || si >= d[0] || sj >= d[1] || sk >= d[2])
                ? 0
                : vol.at(si, sj, sk);
      }
  return out;
}

namespace {

void smooth_axis(ArrayXd& data, const Vector3i& dims, int axis, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  ArrayXd kernel(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t)
    kernel[t + radius] = std::exp(-0.5 * (t / sigma) * (t / sigma));
  kernel /= kernel.sum();

  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  const std::int64_t n_axis = dims[axis];
  const std::int64_t stride = (axis == 0) ? 1 : (axis == 1) ? nx : nx * ny;
  ArrayXd line(n_axis);

  auto smooth_line = [&](std::int64_t offset) {
    for (std::int64_t i = 0; i < n_axis; ++i) line[i] = data[offset + i * stride];
    for (std::int64_t i = 0; i < n_axis; ++i) {
      double acc = 0.0, wsum = 0.0;
      const std::int64_t lo = std::max<std::int64_t>(0, i - radius);
      const std::int64_t hi = std::min<std::int64_t>(n_axis - 1, i + radius);
      for (std::int64_t t = lo; t <= hi; ++t) {
        const double w = kernel[t - i + radius];
        acc += w * line[t];
        wsum += w;
      }
      data[offset + i * stride] = acc / wsum;  // renormalized at the borders
    }
  };

  if (axis == 0) {
    for (std::int64_t k = 0; k < nz; ++k)
      for (std::int64_t j = 0; j < ny; ++j) smooth_line(nx * (j + ny * k));
  } else if (axis == 1) {
    for (std::int64_t k = 0; k < nz; ++k)
      for (std::int64_t i = 0; i < nx; ++i) smooth_line(i + nx * ny * k);
  } else {
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) smooth_line(i + nx * j);
  }
}

}  // namespace

ScalarVolume gaussian_smooth(const ScalarVolume& vol, const Vector3d& sigma_voxels) {
  ScalarVolume out = vol;
  for (int a = 0; a < 3; ++a) smooth_axis(out.data, out.grid.dims, a, sigma_voxels[a]);
  return out;
}

std::vector<ScalarVolume> pyramid(const ScalarVolume& vol, int levels) {
  if (levels < 1) throw DataError("pyramid needs levels >= 1");
  vol.grid.validate();
  const int coarsest_factor = 1 << (levels - 1);
  for (int a = 0; a < 3; ++a)
    if ((vol.grid.dims[a] + coarsest_factor - 1) / coarsest_factor < 4)
      throw DataError("volume too small for requested pyramid levels (coarsest dims must be >= 4)");

  std::vector<ScalarVolume> out;
  out.reserve(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const int factor = 1 << (levels - 1 - l);
    if (factor == 1) {
      out.push_back(vol);
      continue;
    }
    const double sigma = 0.5 * factor;
    ScalarVolume smoothed = gaussian_smooth(vol, Vector3d::Constant(sigma));
    Grid3 g;
    for (int a = 0; a < 3; ++a) g.dims[a] = (vol.grid.dims[a] + factor - 1) / factor;
    g.spacing = vol.grid.spacing * factor;
    g.origin = vol.grid.origin;
    ScalarVolume level(g);
    std::int64_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i, ++n)
          level.data[n] = smoothed.at(i * factor, j * factor, k * factor);
    out.push_back(std::move(level));
  }
  return out;
}

}  // namespace atlaseg
