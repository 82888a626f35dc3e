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
#ifndef atlaseg_registration_hpp
#define atlaseg_registration_hpp

#include <functional>
#include <string>
#include <vector>

#include "atlaseg/transform.hpp"
#include "atlaseg/types.hpp"
#include "atlaseg/volume.hpp"

namespace atlaseg {

struct MiConfig {
  int bins = 32;
  int samples_per_iter = 2048;
  // Parzen window order per histogram axis: 0 box, 1 linear, 3 cubic
  int fixed_parzen_order = 1;
  int moving_parzen_order = 3;
  Interpolator moving_interpolator = Interpolator::Cubic;
  double background = 0.0;

  void validate() const;
};

struct AsgdConfig {
  int iterations = 500;
  double a = 0.0;  // 0 means auto-scale from the first gradient
  double big_a = 20.0;
  double alpha = 0.602;
  // world-space length of the largest first step when auto-scaling
  double target_step = 1.0;

  void validate() const;
};

enum class Stage { Affine, Ffd };

struct RegistrationConfig {
  int levels = 4;
  std::vector<Stage> stages = {Stage::Affine, Stage::Ffd};
  MiConfig mi;
  AsgdConfig asgd;
  double ffd_knot_spacing_voxels = 8.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Which parameter block the MI gradient is taken with respect to.
enum class WrtParams { Affine, Ffd };

struct MiValueGrad {
  double value = 0.0;
  VectorXd gradient;
};

// Negated mutual information between the fixed image and the moving image
// pulled back through `t`, estimated from a Parzen joint histogram over
// `cfg.samples_per_iter` randomly sampled fixed voxels, together with the
// analytic gradient with respect to the chosen parameter block. The affine
// block is parameterized about `affine_center` (matrix entries row-major,
// then translation).
MiValueGrad mutual_information(const ScalarVolume& fixed, const ScalarVolume& moving,
                               const TransformChain& t, WrtParams wrt, const MiConfig& cfg,
                               std::uint64_t seed, const Vector3d& affine_center);

struct AsgdResult {
  VectorXd params;
  std::vector<double> trace;
};

using CostAndGradFn = std::function<std::pair<double, VectorXd>(const VectorXd&, int iteration)>;

// Stochastic gradient descent with the decaying gain a/(t + A)^alpha.
// `scales` maps a unit change of each parameter to a world-space length and
// drives the auto-scaling of `a`; pass an empty vector for all-ones.
AsgdResult asgd_minimize(const CostAndGradFn& cost, const VectorXd& initial, const AsgdConfig& cfg,
                         const VectorXd& scales = VectorXd());

struct StageTrace {
  std::string stage;
  int level = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> trace;
};

struct RegistrationReport {
  int levels = 0;
  std::vector<StageTrace> stages;
  double elapsed_seconds = 0.0;

  std::string to_json() const;
};

struct RegistrationResult {
  TransformChain transform;
  RegistrationReport report;
};

// Coarse-to-fine registration of `moving` onto `fixed`: centers-of-mass
// pre-alignment, then the affine stage over all pyramid levels, then the
// FFD stage over all levels with dyadic coefficient refinement in between.
RegistrationResult register_pair(const ScalarVolume& fixed, const ScalarVolume& moving,
                                 const RegistrationConfig& cfg);

}  // namespace atlaseg

#endif
