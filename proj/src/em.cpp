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
#include "atlaseg/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "atlaseg/log.hpp"

namespace atlaseg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kVarianceFloorFraction = 1e-6;

double data_variance(const ArrayXd& data) {
  const double mean = data.mean();
  return (data - mean).square().mean();
}

}  // namespace

void GmmState::validate() const {
  const int k = num_components();
  if (k < 1) throw DataError("mixture needs at least one component");
  if (means.size() != k || variances.size() != k) throw DataError("mixture parameter size mismatch");
  if ((weights.array() < 0.0).any()) throw DataError("negative mixture weight");
  if (std::abs(weights.sum() - 1.0) > 1e-9) throw DataError("mixture weights do not sum to 1");
  if ((variances.array() <= 0.0).any()) throw DataError("non-positive mixture variance");
  if (!means.allFinite() || !variances.allFinite()) throw DataError("non-finite mixture parameters");
}

std::string GmmState::to_json() const {
  nlohmann::json j;
  j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  j["means"] = std::vector<double>(means.data(), means.data() + means.size());
  j["variances"] = std::vector<double>(variances.data(), variances.data() + variances.size());
  j["log_likelihood"] = log_likelihood;
  j["frozen"] = frozen;
  return j.dump(2);
}

double gaussian_pdf(double x, double mean, double variance) {
  if (!(variance > 0.0)) throw DataError("Gaussian variance must be positive");
  const double d = x - mean;
  return std::exp(-0.5 * d * d / variance) / std::sqrt(kTwoPi * variance);
}

std::pair<ProbMatrix, double> e_step(const ArrayXd& data, const GmmState& state) {
  state.validate();
  const int k = state.num_components();
  const Eigen::Index m = data.size();

  VectorXd log_weight(k), log_norm(k), inv_two_var(k);
  for (int c = 0; c < k; ++c) {
    log_weight[c] = (state.weights[c] > 0.0) ? std::log(state.weights[c])
                                             : -std::numeric_limits<double>::infinity();
    log_norm[c] = -0.5 * std::log(kTwoPi * state.variances[c]);
    inv_two_var[c] = 0.5 / state.variances[c];
  }

  ProbMatrix w(m, k);
  double ll = 0.0;
  VectorXd row(k);
  for (Eigen::Index i = 0; i < m; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = data[i] - state.means[c];
      row[c] = log_weight[c] + log_norm[c] - d * d * inv_two_var[c];
      row_max = std::max(row_max, row[c]);
    }
    if (!std::isfinite(row_max))
      throw NumericError("no mixture component has positive density at data point " +
                         std::to_string(i));
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double e = std::exp(row[c] - row_max);
      w(i, c) = e;
      sum += e;
    }
    w.row(i) /= sum;
    ll += row_max + std::log(sum);
  }
  return {std::move(w), ll};
}

void m_step(const ArrayXd& data, const ProbMatrix& memberships, GmmState& state,
            double variance_floor) {
  const int k = state.num_components();
  const Eigen::Index m = data.size();
  if (memberships.rows() != m || memberships.cols() != k)
    throw DataError("membership matrix shape mismatch");

  for (int c = 0; c < k; ++c) {
    const double mass = memberships.col(c).sum();
    state.weights[c] = mass / static_cast<double>(m);
    if (mass <= 0.0) {
      if (std::find(state.frozen.begin(), state.frozen.end(), c) == state.frozen.end())
        state.frozen.push_back(c);
      continue;
    }
    const double mean = (memberships.col(c).array() * data).sum() / mass;
    const double var = (memberships.col(c).array() * (data - mean).square()).sum() / mass;
    state.means[c] = mean;
    state.variances[c] = std::max(var, variance_floor);
  }
  // frozen components keep their parameters; renormalize the weights so the
  // state stays a distribution
  const double wsum = state.weights.sum();
  if (wsum > 0.0) state.weights /= wsum;
}

GmmState init_from_atlas(const ScalarVolume& target, const ProbabilisticAtlas& atlas) {
  target.validate();
  if (!atlas.grid().same_as(target.grid))
    throw DataError("atlas and target are on different grids");

  const int k = atlas.num_classes();
  const ArrayXd& y = target.data;
  const double global_var = data_variance(y);
  const double floor = std::max(kVarianceFloorFraction * global_var,
                                std::numeric_limits<double>::min());

  GmmState state;
  state.weights.resize(k);
  state.means.resize(k);
  state.variances.resize(k);
  for (int c = 0; c < k; ++c) {
    const ArrayXd& p = atlas.priors[static_cast<std::size_t>(c)].data;
    const double mass = p.sum();
    state.weights[c] = mass / static_cast<double>(y.size());
    if (mass > 0.0) {
      const double mean = (p * y).sum() / mass;
      state.means[c] = mean;
      state.variances[c] = std::max((p * (y - mean).square()).sum() / mass, floor);
    } else {
      state.means[c] = y.mean();
      state.variances[c] = std::max(global_var, floor);
    }
  }
  const double wsum = state.weights.sum();
  if (!(wsum > 0.0)) throw DataError("atlas priors carry no mass");
  state.weights /= wsum;
  return state;
}

GmmState fit_gmm(const ArrayXd& data, const GmmState& init, double tol, int max_iter) {
  if (data.size() < 2) throw DataError("mixture fit needs at least 2 data points");
  if ((data == data[0]).all()) throw NumericError("mixture fit needs at least 2 distinct intensities");
  if (max_iter < 1) throw DataError("mixture fit needs at least 1 iteration");
  if (!(tol >= 0.0)) throw DataError("tolerance must be non-negative");
  init.validate();

  const double floor = std::max(kVarianceFloorFraction * data_variance(data),
                                std::numeric_limits<double>::min());

  GmmState state = init;
  state.variances = state.variances.cwiseMax(floor);
  state.log_likelihood.clear();

  for (int iter = 0; iter < max_iter; ++iter) {
    auto [w, ll] = e_step(data, state);
    state.memberships = std::move(w);
    const bool converged =
        !state.log_likelihood.empty() &&
        ll - state.log_likelihood.back() < tol * std::max(1.0, std::abs(state.log_likelihood.back()));
    state.log_likelihood.push_back(ll);
    if (converged) break;
    m_step(data, state.memberships, state, floor);
    if (iter + 1 == max_iter) {
      auto [w_final, ll_final] = e_step(data, state);
      state.memberships = std::move(w_final);
      state.log_likelihood.push_back(ll_final);
    }
  }
  if (!state.frozen.empty())
    log_printf(LogLevel::Warn, "%zu mixture component(s) hit zero mass and were frozen",
               state.frozen.size());
  return state;
}

GmmState fit_em(const ScalarVolume& target, const ProbabilisticAtlas& atlas, double tol,
                int max_iter) {
  return fit_gmm(target.data, init_from_atlas(target, atlas), tol, max_iter);
}

LabelVolume gmm_argmax_labels(const GmmState& state, const Grid3& grid, const ClassMap& class_map) {
  if (state.memberships.rows() != grid.voxel_count())
    throw DataError("membership row count does not match grid");
  if (state.memberships.cols() != static_cast<Eigen::Index>(class_map.size()))
    throw DataError("membership column count does not match class map");

  LabelVolume out(grid, class_map);
  for (Eigen::Index v = 0; v < state.memberships.rows(); ++v) {
    int best = 0;
    double best_p = state.memberships(v, 0);
    for (Eigen::Index k = 1; k < state.memberships.cols(); ++k)
      if (state.memberships(v, k) > best_p) {
        best = static_cast<int>(k);
        best_p = state.memberships(v, k);
      }
    out.data[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(best);
  }
  return out;
}

std::pair<LabelVolume, PosteriorField> pas_em_combine(const ProbMatrix& memberships,
                                                      const PosteriorField& posterior,
                                                      const ClassMap& class_map) {
  if (memberships.rows() != posterior.probs.rows() || memberships.cols() != posterior.probs.cols())
    throw DataError("membership and posterior shapes differ");
  if (memberships.cols() != static_cast<Eigen::Index>(class_map.size()))
    throw DataError("class count does not match class map");

  PosteriorField combined;
  combined.grid = posterior.grid;
  combined.probs.resize(posterior.probs.rows(), posterior.probs.cols());

  LabelVolume labels(posterior.grid, class_map);
  for (Eigen::Index v = 0; v < memberships.rows(); ++v) {
    combined.probs.row(v) = memberships.row(v).cwiseProduct(posterior.probs.row(v));
    const double sum = combined.probs.row(v).sum();
    if (sum > 0.0)
      combined.probs.row(v) /= sum;
    else
      combined.probs.row(v) = posterior.probs.row(v);

    int best = 0;
    double best_p = combined.probs(v, 0);
    for (Eigen::Index k = 1; k < combined.probs.cols(); ++k)
      if (combined.probs(v, k) > best_p) {
        best = static_cast<int>(k);
        best_p = combined.probs(v, k);
      }
    labels.data[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(best);
  }
  return {std::move(labels), std::move(combined)};
}

}  // namespace atlaseg
