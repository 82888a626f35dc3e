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
#include "atlaseg/bayes.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace atlaseg {

int TissueModel::bin_index(double intensity) const {
  if (!(max > min)) throw DataError("tissue model has a degenerate intensity range");
  const double t = (intensity - min) / (max - min) * (n_bins - 1);
  const int b = static_cast<int>(std::floor(t));
  return std::min(std::max(b, 0), n_bins - 1);
}

VectorXd TissueModel::likelihood_row(double intensity) const {
  return table.row(bin_index(intensity)).transpose();
}

void TissueModel::validate() const {
  if (n_bins < 2) throw DataError("tissue model needs at least 2 bins");
  if (!(max > min)) throw DataError("tissue model has a degenerate intensity range");
  validate_class_map(class_map);
  if (table.rows() != n_bins || table.cols() != num_classes())
    throw DataError("tissue model table shape mismatch");
  for (int b = 0; b < n_bins; ++b) {
    double sum = 0.0;
    for (int k = 0; k < num_classes(); ++k) {
      if (table(b, k) < 0.0) throw DataError("negative tissue model entry");
      sum += table(b, k);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("tissue model row does not sum to 1");
  }
}

void PosteriorField::validate() const {
  grid.validate();
  if (probs.rows() != grid.voxel_count()) throw DataError("posterior row count does not match grid");
  for (Eigen::Index v = 0; v < probs.rows(); ++v) {
    if ((probs.row(v).array() < 0.0).any()) throw DataError("negative posterior probability");
    if (std::abs(probs.row(v).sum() - 1.0) > 1e-9)
      throw DataError("posterior row does not sum to 1");
  }
}

TissueModel estimate_tissue_model(const std::vector<AtlasMember>& training, int n_bins) {
  if (training.empty()) throw DataError("tissue model needs at least one training pair");
  if (n_bins < 2) throw DataError("tissue model needs at least 2 bins");

  TissueModel model;
  model.n_bins = n_bins;
  model.class_map = training.front().labels.class_map;
  const int num_classes = static_cast<int>(model.class_map.size());

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& pair : training) {
    pair.validate();
    if (pair.labels.class_map != model.class_map)
      throw DataError("training pairs use different class maps");
    lo = std::min(lo, pair.intensity.data.minCoeff());
    hi = std::max(hi, pair.intensity.data.maxCoeff());
  }
  if (!(hi > lo)) throw DataError("training intensities are constant");
  model.min = lo;
  model.max = hi;

  MatrixXd counts = MatrixXd::Zero(n_bins, num_classes);
  VectorXd totals = VectorXd::Zero(num_classes);
  for (const auto& pair : training) {
    const std::int64_t n = pair.intensity.grid.voxel_count();
    for (std::int64_t v = 0; v < n; ++v) {
      const int b = model.bin_index(pair.intensity.data[v]);
      const int k = pair.labels.data[static_cast<std::size_t>(v)];
      counts(b, k) += 1.0;
      totals[k] += 1.0;
    }
  }

  for (int k = 0; k < num_classes; ++k)
    if (totals[k] == 0.0)
      throw DataError("class with raw code " + std::to_string(model.class_map[static_cast<std::size_t>(k)]) +
                      " has no voxels in the training data");
  for (int k = 0; k < num_classes; ++k) counts.col(k) /= totals[k];

  model.table.resize(n_bins, num_classes);
  const double uniform = 1.0 / static_cast<double>(num_classes);
  for (int b = 0; b < n_bins; ++b) {
    const double sum = counts.row(b).sum();
    if (sum > 0.0)
      model.table.row(b) = counts.row(b) / sum;
    else
      model.table.row(b).setConstant(uniform);
  }
  return model;
}

std::pair<LabelVolume, PosteriorField> map_classify(const ProbabilisticAtlas& prior,
                                                    const TissueModel& model,
                                                    const ScalarVolume& target) {
  target.validate();
  if (!prior.grid().same_as(target.grid))
    throw DataError("atlas and target are on different grids");
  if (prior.class_map != model.class_map)
    throw DataError("atlas and tissue model use different class maps");

  const int num_classes = prior.num_classes();
  const std::int64_t n = target.grid.voxel_count();

  LabelVolume labels(target.grid, prior.class_map);
  PosteriorField field;
  field.grid = target.grid;
  field.probs.resize(n, num_classes);

  for (std::int64_t v = 0; v < n; ++v) {
    const VectorXd like = model.likelihood_row(target.data[v]);
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double p = prior.priors[static_cast<std::size_t>(k)].data[v] * like[k];
      field.probs(v, k) = p;
      sum += p;
    }

    if (sum > 0.0) {
      field.probs.row(v) /= sum;
    } else {
      for (int k = 0; k < num_classes; ++k)
        field.probs(v, k) = prior.priors[static_cast<std::size_t>(k)].data[v];
      const double psum = field.probs.row(v).sum();
      if (psum > 0.0) field.probs.row(v) /= psum;
    }

    int best = 0;
    double best_p = field.probs(v, 0);
    for (int k = 1; k < num_classes; ++k)
      if (field.probs(v, k) > best_p) {
        best = k;
        best_p = field.probs(v, k);
      }
    labels.data[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(best);
  }
  return {std::move(labels), std::move(field)};
}

void save_tissue_model(const TissueModel& model, const std::string& path) {
  model.validate();
  nlohmann::json j;
  j["version"] = 1;
  j["n_bins"] = model.n_bins;
  j["range"] = {model.min, model.max};
  j["class_map"] = model.class_map;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(model.table.size()));
  for (int b = 0; b < model.n_bins; ++b)
    for (int k = 0; k < model.num_classes(); ++k) flat.push_back(model.table(b, k));
  j["table"] = std::move(flat);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write tissue model: " + path);
  out << j.dump() << "\n";
}

TissueModel load_tissue_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tissue model: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("tissue model is not valid JSON: ") + e.what());
  }

  TissueModel model;
  if (!j.contains("n_bins") || !j.contains("range") || !j.contains("class_map") || !j.contains("table"))
    throw DataError("tissue model file is missing required fields: " + path);
  model.n_bins = j["n_bins"].get<int>();
  model.min = j["range"][0].get<double>();
  model.max = j["range"][1].get<double>();
  model.class_map = j["class_map"].get<ClassMap>();
  const auto flat = j["table"].get<std::vector<double>>();
  const int num_classes = model.num_classes();
  if (static_cast<std::int64_t>(flat.size()) != static_cast<std::int64_t>(model.n_bins) * num_classes)
    throw DataError("tissue model table size mismatch: " + path);
  model.table.resize(model.n_bins, num_classes);
  for (int b = 0; b < model.n_bins; ++b)
    for (int k = 0; k < num_classes; ++k)
      model.table(b, k) = flat[static_cast<std::size_t>(b) * num_classes + static_cast<std::size_t>(k)];
  model.validate();
  return model;
}

}  // namespace atlaseg
