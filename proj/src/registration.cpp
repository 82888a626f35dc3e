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
#include "atlaseg/registration.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "atlaseg/log.hpp"
#include "atlaseg/rng.hpp"

namespace atlaseg {

void MiConfig::validate() const {
  if (bins < 8) throw DataError("MI needs at least 8 histogram bins");
  if (samples_per_iter < 256) throw DataError("MI needs at least 256 samples per iteration");
  auto ok_order = [](int q) { return q == 0 || q == 1 || q == 3; };
  if (!ok_order(fixed_parzen_order) || !ok_order(moving_parzen_order))
    throw DataError("Parzen window order must be 0, 1 or 3");
  if (!std::isfinite(background)) throw DataError("background value must be finite");
}

void AsgdConfig::validate() const {
  if (iterations < 1) throw DataError("optimizer needs at least 1 iteration");
  if (!(alpha > 0.5 && alpha <= 1.0)) throw DataError("gain exponent alpha must be in (0.5, 1]");
  if (!(big_a > 0.0)) throw DataError("gain offset A must be positive");
  if (a < 0.0) throw DataError("gain factor a must be non-negative");
  if (!(target_step > 0.0)) throw DataError("target step must be positive");
}

void RegistrationConfig::validate() const {
  if (levels < 1) throw DataError("registration needs at least 1 level");
  if (stages.empty()) throw DataError("registration needs at least 1 stage");
  if (!(ffd_knot_spacing_voxels > 0.0)) throw DataError("knot spacing must be positive");
  mi.validate();
  asgd.validate();
}

namespace {

// padding keeps full Parzen support inside the histogram
constexpr int kBinPad = 2;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(base ^ 0x6a09e667f3bcc908ull) + a) + b) + c * 0x9e3779b97f4a7c15ull;
}

struct BinAxis {
  double min = 0.0;
  double max = 0.0;
  double binsize = 1.0;
  int bins = 32;
  int order = 1;

  void setup(double lo, double hi, int nbins, int q) {
    min = lo;
    max = hi;
    bins = nbins;
    order = q;
    if (!(hi > lo)) throw NumericError("degenerate intensity range for MI histogram");
    binsize = (hi - lo) / static_cast<double>(nbins - 2 * kBinPad);
  }

  double term(double v) const {
    const double c = std::min(std::max(v, min), max);
    return c / binsize - (min / binsize - kBinPad);
  }
};

// up to four histogram taps of a Parzen window placed at term t
struct Taps {
  int base = 0;
  int count = 0;
  double w[4] = {0, 0, 0, 0};
  double dw[4] = {0, 0, 0, 0};  // derivative with respect to t
};

Taps window_taps(const BinAxis& ax, double t, bool with_derivative) {
  Taps taps;
  switch (ax.order) {
    case 0: {
      int b = static_cast<int>(std::floor(t + 0.5));
      b = std::min(std::max(b, 0), ax.bins - 1);
      taps.base = b;
      taps.count = 1;
      taps.w[0] = 1.0;
      return taps;
    }
    case 1: {
      int b = static_cast<int>(std::floor(t));
      b = std::min(std::max(b, kBinPad), ax.bins - kBinPad);
      taps.base = b;
      taps.count = 2;
      for (int j = 0; j < 2; ++j) {
        const double x = t - (b + j);
        const double axj = std::abs(x);
        taps.w[j] = (axj < 1.0) ? 1.0 - axj : 0.0;
        if (with_derivative) taps.dw[j] = (axj < 1.0) ? ((x < 0.0) ? 1.0 : -1.0) : 0.0;
      }
      return taps;
    }
    default: {
      int b = static_cast<int>(std::floor(t));
      b = std::min(std::max(b, kBinPad), ax.bins - kBinPad - 1);
      taps.base = b - 1;
      taps.count = 4;
      for (int j = 0; j < 4; ++j) {
        const double x = t - (taps.base + j);
        taps.w[j] = bspline3(x);
        if (with_derivative) taps.dw[j] = bspline3_derivative(x);
      }
      return taps;
    }
  }
}

struct SampleRec {
  Taps fixed_taps;
  Taps moving_taps;
  Vector3d dv_dy;     // moving intensity gradient in world mm
  Vector3d x_world;   // fixed sample position
};

class MiMetric {
 public:
  MiMetric(const ScalarVolume& fixed, const ScalarVolume& moving, const MiConfig& cfg,
           const Vector3d& affine_center)
      : fixed_(fixed),
        moving_(moving),
        cfg_(cfg),
        center_(affine_center),
        sampler_(moving, cfg.moving_interpolator, cfg.background) {
    cfg.validate();
    fixed_axis_.setup(fixed.data.minCoeff(), fixed.data.maxCoeff(), cfg.bins, cfg.fixed_parzen_order);
    const double mlo = std::min(moving.data.minCoeff(), cfg.background);
    const double mhi = std::max(moving.data.maxCoeff(), cfg.background);
    moving_axis_.setup(mlo, mhi, cfg.bins, cfg.moving_parzen_order);
  }

  MiValueGrad evaluate(const TransformChain& t, WrtParams wrt, std::uint64_t seed) const {
    if (wrt == WrtParams::Ffd && !t.ffd)
      throw DataError("FFD gradient requested but the transform has no FFD");

    const int n = cfg_.samples_per_iter;
    const int bins = cfg_.bins;
    Rng rng(seed);

    std::vector<SampleRec> recs(static_cast<std::size_t>(n));
    MatrixXd pdf = MatrixXd::Zero(bins, bins);

    double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo;
    double m_lo = f_lo, m_hi = -f_lo;

    const std::int64_t total = fixed_.grid.voxel_count();
    const auto& fd = fixed_.grid.dims;
    for (int s = 0; s < n; ++s) {
      const std::int64_t idx = rng.uniform_index(total);
      const int i = static_cast<int>(idx % fd[0]);
      const int j = static_cast<int>((idx / fd[0]) % fd[1]);
      const int k = static_cast<int>(idx / (static_cast<std::int64_t>(fd[0]) * fd[1]));

      const double vf = fixed_.data[idx];
      const Vector3d x = fixed_.grid.world(i, j, k);
      const Vector3d y = t.apply(x);
      const auto [vm, gvox] = sampler_.value_and_gradient(moving_.grid.voxel(y));

      f_lo = std::min(f_lo, vf);
      f_hi = std::max(f_hi, vf);
      m_lo = std::min(m_lo, vm);
      m_hi = std::max(m_hi, vm);

      SampleRec& r = recs[static_cast<std::size_t>(s)];
      r.fixed_taps = window_taps(fixed_axis_, fixed_axis_.term(vf), false);
      r.moving_taps = window_taps(moving_axis_, moving_axis_.term(vm), true);
      r.dv_dy = gvox.cwiseQuotient(moving_.grid.spacing);
      r.x_world = x;

      for (int a = 0; a < r.fixed_taps.count; ++a)
        for (int b = 0; b < r.moving_taps.count; ++b)
          pdf(r.fixed_taps.base + a, r.moving_taps.base + b) +=
              r.fixed_taps.w[a] * r.moving_taps.w[b];
    }

    // A spread below machine precision relative to the signal magnitude is
    // treated as constant; interpolation noise must not mask degeneracy.
    if (f_hi - f_lo <= 1e-12 * std::max({std::abs(f_lo), std::abs(f_hi), 1.0}))
      throw NumericError("degenerate sample set: fixed intensities are constant");
    if (m_hi - m_lo <= 1e-12 * std::max({std::abs(m_lo), std::abs(m_hi), 1.0}))
      throw NumericError("degenerate sample set: moving intensities are constant (no overlap?)");

    pdf /= static_cast<double>(n);
    const VectorXd pf = pdf.rowwise().sum();
    const VectorXd pm = pdf.colwise().sum();

    double mi = 0.0;
    MatrixXd logratio = MatrixXd::Zero(bins, bins);  // log(p / pm), 0 where p == 0
    for (int f = 0; f < bins; ++f)
      for (int m = 0; m < bins; ++m) {
        const double p = pdf(f, m);
        if (p <= 0.0) continue;
        logratio(f, m) = std::log(p / pm[m]);
        mi += p * std::log(p / (pf[f] * pm[m]));
      }

    MiValueGrad out;
    out.value = -mi;

    const double inv = 1.0 / (static_cast<double>(n) * moving_axis_.binsize);
    if (wrt == WrtParams::Affine) {
      out.gradient = VectorXd::Zero(12);
      for (const SampleRec& r : recs) {
        const double alpha = sample_alpha(r, logratio) * inv;
        if (alpha == 0.0) continue;
        const Vector3d xc = r.x_world - center_;
        for (int row = 0; row < 3; ++row) {
          const double g = -alpha * r.dv_dy[row];
          out.gradient[3 * row + 0] += g * xc[0];
          out.gradient[3 * row + 1] += g * xc[1];
          out.gradient[3 * row + 2] += g * xc[2];
          out.gradient[9 + row] += g;
        }
      }
    } else {
      const FfdTransform& ffd = *t.ffd;
      out.gradient = VectorXd::Zero(3 * ffd.control_count());
      for (const SampleRec& r : recs) {
        const double alpha = sample_alpha(r, logratio) * inv;
        if (alpha == 0.0) continue;
        ffd.for_each_support_weight(r.x_world, [&](std::int64_t row, double w) {
          const double c = -alpha * w;
          out.gradient[3 * row + 0] += c * r.dv_dy[0];
          out.gradient[3 * row + 1] += c * r.dv_dy[1];
          out.gradient[3 * row + 2] += c * r.dv_dy[2];
        });
      }
    }
    return out;
  }

 private:
  static double sample_alpha(const SampleRec& r, const MatrixXd& logratio) {
    double alpha = 0.0;
    for (int a = 0; a < r.fixed_taps.count; ++a)
      for (int b = 0; b < r.moving_taps.count; ++b)
        alpha += r.fixed_taps.w[a] * r.moving_taps.dw[b] *
                 logratio(r.fixed_taps.base + a, r.moving_taps.base + b);
    return alpha;
  }

  const ScalarVolume& fixed_;
  const ScalarVolume& moving_;
  MiConfig cfg_;
  Vector3d center_;
  VolumeSampler sampler_;
  BinAxis fixed_axis_;
  BinAxis moving_axis_;
};

Vector3d grid_center(const Grid3& g) {
  return g.origin + (g.spacing.array() * (g.dims.cast<double>().array() - 1.0) * 0.5).matrix();
}

Vector3d center_of_mass(const ScalarVolume& v) {
  const double lo = v.data.minCoeff();
  Vector3d acc = Vector3d::Zero();
  double total = 0.0;
  std::int64_t n = 0;
  for (int k = 0; k < v.grid.dims[2]; ++k)
    for (int j = 0; j < v.grid.dims[1]; ++j)
      for (int i = 0; i < v.grid.dims[0]; ++i, ++n) {
        const double w = v.data[n] - lo;
        acc += w * v.grid.world(i, j, k);
        total += w;
      }
  if (total <= 0.0) return grid_center(v.grid);
  return acc / total;
}

AffineTransform affine_from_params(const VectorXd& p, const Vector3d& center) {
  Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = p[3 * r + c];
  return AffineTransform::about_center(m, center, {p[9], p[10], p[11]});
}

VectorXd params_from_affine(const AffineTransform& a, const Vector3d& center) {
  VectorXd p(12);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p[3 * r + c] = a.matrix(r, c);
  const Vector3d t = a.apply(center) - center;
  p[9] = t[0];
  p[10] = t[1];
  p[11] = t[2];
  return p;
}

}  // namespace

MiValueGrad mutual_information(const ScalarVolume& fixed, const ScalarVolume& moving,
                               const TransformChain& t, WrtParams wrt, const MiConfig& cfg,
                               std::uint64_t seed, const Vector3d& affine_center) {
  const MiMetric metric(fixed, moving, cfg, affine_center);
  return metric.evaluate(t, wrt, seed);
}

AsgdResult asgd_minimize(const CostAndGradFn& cost, const VectorXd& initial, const AsgdConfig& cfg,
                         const VectorXd& scales) {
  cfg.validate();
  if (!initial.allFinite()) throw DataError("initial parameters must be finite");
  if (scales.size() != 0 && scales.size() != initial.size())
    throw DataError("scales length does not match parameter count");

  AsgdResult out;
  out.params = initial;
  out.trace.reserve(static_cast<std::size_t>(cfg.iterations));

  double a = cfg.a;
  for (int t = 0; t < cfg.iterations; ++t) {
    auto [value, grad] = cost(out.params, t);
    if (!std::isfinite(value) || !grad.allFinite())
      throw NumericError("non-finite cost or gradient at iteration " + std::to_string(t));
    if (grad.size() != out.params.size())
      throw DataError("gradient length does not match parameter count");

    if (t == 0 && a <= 0.0) {
      double reach = 0.0;
      for (Eigen::Index i = 0; i < grad.size(); ++i) {
        const double s = (scales.size() != 0) ? scales[i] : 1.0;
        reach = std::max(reach, s * std::abs(grad[i]));
      }
      // a vanishing first gradient means the start already sits at an
      // optimum; calibrating the gain against it would blow the steps up
      a = (reach > 1e-8) ? std::pow(cfg.big_a, cfg.alpha) * cfg.target_step / reach : 1.0;
    }

    const double gain = a / std::pow(static_cast<double>(t) + cfg.big_a, cfg.alpha);
    VectorXd step = gain * grad;
    double longest = 0.0;
    for (Eigen::Index i = 0; i < step.size(); ++i) {
      const double s = (scales.size() != 0) ? scales[i] : 1.0;
      longest = std::max(longest, s * std::abs(step[i]));
    }
    // no single update may move a point farther than the target step, so a
    // gain calibrated on an unrepresentative gradient cannot throw the
    // parameters out of the capture range
    if (longest > cfg.target_step) step *= cfg.target_step / longest;
    out.params -= step;
    out.trace.push_back(value);
  }
  return out;
}

std::string RegistrationReport::to_json() const {
  nlohmann::json j;
  j["levels"] = levels;
  j["elapsed_seconds"] = elapsed_seconds;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    nlohmann::json js;
    js["stage"] = s.stage;
    js["level"] = s.level;
    js["initial_cost"] = s.initial_cost;
    js["final_cost"] = s.final_cost;
    js["trace"] = s.trace;
    j["stages"].push_back(std::move(js));
  }
  return j.dump(2);
}

RegistrationResult register_pair(const ScalarVolume& fixed, const ScalarVolume& moving,
                                 const RegistrationConfig& cfg) {
  cfg.validate();
  fixed.validate();
  moving.validate();

  const auto t_start = std::chrono::steady_clock::now();

  const std::vector<ScalarVolume> fixed_pyr = pyramid(fixed, cfg.levels);
  const std::vector<ScalarVolume> moving_pyr = pyramid(moving, cfg.levels);

  const Vector3d center = grid_center(fixed.grid);
  const Vector3d pre_align = center_of_mass(moving) - center_of_mass(fixed);
  log_printf(LogLevel::Debug, "pre-alignment translation (%.3f, %.3f, %.3f) mm", pre_align[0],
             pre_align[1], pre_align[2]);

  AffineTransform affine;
  affine.translation = pre_align;
  std::optional<FfdTransform> ffd;

  double affine_scale = 0.0;
  for (int a = 0; a < 3; ++a)
    affine_scale = std::max(affine_scale, 0.5 * (fixed.grid.dims[a] - 1) * fixed.grid.spacing[a]);
  if (affine_scale <= 0.0) affine_scale = 1.0;

  RegistrationResult result;
  result.report.levels = cfg.levels;

  int stage_index = 0;
  for (const Stage stage : cfg.stages) {
    if (stage == Stage::Ffd && !ffd) {
      const double coarse_knots = cfg.ffd_knot_spacing_voxels * static_cast<double>(1 << (cfg.levels - 1));
      ffd = FfdTransform::for_grid(fixed.grid, coarse_knots);
    }

    for (int level = 0; level < cfg.levels; ++level) {
      const ScalarVolume& f = fixed_pyr[static_cast<std::size_t>(level)];
      const ScalarVolume& m = moving_pyr[static_cast<std::size_t>(level)];
      const MiMetric metric(f, m, cfg.mi, center);

      AsgdConfig asgd = cfg.asgd;
      asgd.target_step = f.grid.spacing.minCoeff();

      StageTrace st;
      st.level = level;

      if (stage == Stage::Affine) {
        st.stage = "affine";
        const auto cost = [&](const VectorXd& p, int iter) {
          TransformChain chain{affine_from_params(p, center), ffd};
          const MiValueGrad vg =
              metric.evaluate(chain, WrtParams::Affine,
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(stage_index),
                                       static_cast<std::uint64_t>(level),
                                       static_cast<std::uint64_t>(iter)));
          return std::make_pair(vg.value, vg.gradient);
        };
        VectorXd scales = VectorXd::Ones(12);
        scales.head(9).setConstant(affine_scale);
        const AsgdResult r = asgd_minimize(cost, params_from_affine(affine, center), asgd, scales);
        affine = affine_from_params(r.params, center);
        st.trace = r.trace;
      } else {
        st.stage = "ffd";
        FfdTransform& grid = *ffd;
        const auto cost = [&](const VectorXd& p, int iter) {
          TransformChain chain;
          chain.affine = affine;
          FfdTransform cand = grid;
          cand.coefficients =
              Eigen::Map<const CoeffMatrix>(p.data(), grid.control_count(), 3);
          chain.ffd = std::move(cand);
          const MiValueGrad vg =
              metric.evaluate(chain, WrtParams::Ffd,
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(stage_index),
                                       static_cast<std::uint64_t>(level),
                                       static_cast<std::uint64_t>(iter)));
          return std::make_pair(vg.value, vg.gradient);
        };
        VectorXd init = Eigen::Map<const VectorXd>(grid.coefficients.data(), 3 * grid.control_count());
        const AsgdResult r = asgd_minimize(cost, init, asgd);
        grid.coefficients = Eigen::Map<const CoeffMatrix>(r.params.data(), grid.control_count(), 3);
        st.trace = r.trace;
      }

      {
        TransformChain chain{affine, ffd};
        const MiValueGrad vg =
            metric.evaluate(chain, stage == Stage::Affine ? WrtParams::Affine : WrtParams::Ffd,
                            mix_seed(cfg.seed, static_cast<std::uint64_t>(stage_index),
                                     static_cast<std::uint64_t>(level),
                                     static_cast<std::uint64_t>(cfg.asgd.iterations)));
        st.final_cost = vg.value;
      }
      st.initial_cost = st.trace.empty() ? st.final_cost : st.trace.front();
      log_printf(LogLevel::Debug, "%s level %d: cost %.6f -> %.6f", st.stage.c_str(), level,
                 st.initial_cost, st.final_cost);
      result.report.stages.push_back(std::move(st));

      if (stage == Stage::Ffd && level + 1 < cfg.levels) *ffd = ffd->refined();
    }
    ++stage_index;
  }

  result.transform.affine = affine;
  result.transform.ffd = std::move(ffd);

  result.report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace atlaseg
