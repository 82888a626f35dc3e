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
#ifndef atlaseg_em_hpp
#define atlaseg_em_hpp

#include <string>
#include <utility>
#include <vector>

#include "atlaseg/atlas.hpp"
#include "atlaseg/bayes.hpp"
#include "atlaseg/types.hpp"
#include "atlaseg/volume.hpp"

namespace atlaseg {

// Univariate Gaussian mixture over image intensities, one component per
// class id (background included).
struct GmmState {
  VectorXd weights;
  VectorXd means;
  VectorXd variances;
  ProbMatrix memberships;             // one row per data point
  std::vector<double> log_likelihood;  // one entry per E-step
  std::vector<int> frozen;             // components that hit zero mass

  int num_components() const { return static_cast<int>(weights.size()); }
  void validate() const;
  std::string to_json() const;
};

double gaussian_pdf(double x, double mean, double variance);

// Membership responsibilities and the data log-likelihood for the current
// parameters, computed in log space with per-row max shifts.
std::pair<ProbMatrix, double> e_step(const ArrayXd& data, const GmmState& state);

// Weight/mean/variance updates from the responsibilities. Components with
// zero total mass keep their parameters and are recorded in state.frozen.
// Variances are floored at variance_floor.
void m_step(const ArrayXd& data, const ProbMatrix& memberships, GmmState& state,
            double variance_floor);

// Component k starts from the prior-weighted intensity moments of class k.
GmmState init_from_atlas(const ScalarVolume& target, const ProbabilisticAtlas& atlas);

// Alternating E/M until the relative log-likelihood gain drops below tol or
// max_iter E-steps have run. The returned memberships match the returned
// parameters.
GmmState fit_gmm(const ArrayXd& data, const GmmState& init, double tol = 1e-6, int max_iter = 500);

GmmState fit_em(const ScalarVolume& target, const ProbabilisticAtlas& atlas, double tol = 1e-6,
                int max_iter = 500);

// Per-voxel argmax of the memberships; ties go to the lowest class id.
LabelVolume gmm_argmax_labels(const GmmState& state, const Grid3& grid, const ClassMap& class_map);

// Voxelwise renormalized product of EM memberships and MAP posteriors.
// Rows whose product vanishes fall back to the posterior alone.
std::pair<LabelVolume, PosteriorField> pas_em_combine(const ProbMatrix& memberships,
                                                      const PosteriorField& posterior,
                                                      const ClassMap& class_map);

}  // namespace atlaseg

#endif
