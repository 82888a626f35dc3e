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
#ifndef atlaseg_bayes_hpp
#define atlaseg_bayes_hpp

#include <string>
#include <utility>
#include <vector>

#include "atlaseg/atlas.hpp"
#include "atlaseg/types.hpp"
#include "atlaseg/volume.hpp"

namespace atlaseg {

// Per-class intensity likelihood as row-normalized histograms. Rows index
// intensity bins over [min, max], columns index class ids.
struct TissueModel {
  int n_bins = 4096;
  double min = 0.0;
  double max = 1.0;
  ClassMap class_map;
  MatrixXd table;

  int num_classes() const { return static_cast<int>(class_map.size()); }
  int bin_index(double intensity) const;
  VectorXd likelihood_row(double intensity) const;
  void validate() const;
};

struct PosteriorField {
  Grid3 grid;
  ProbMatrix probs;  // voxel-major rows, one column per class

  void validate() const;
};

// Histogram estimation over grid-matched (intensity, label) training pairs.
// One shared intensity range over all pairs, per-class count normalization,
// then per-bin row normalization; empty bins become uniform rows.
TissueModel estimate_tissue_model(const std::vector<AtlasMember>& training, int n_bins = 4096);

// Voxelwise posterior = prior * likelihood, renormalized; the label is the
// posterior argmax with ties going to the lowest class id. Voxels where
// every product vanishes fall back to the prior argmax.
std::pair<LabelVolume, PosteriorField> map_classify(const ProbabilisticAtlas& prior,
                                                    const TissueModel& model,
                                                    const ScalarVolume& target);

void save_tissue_model(const TissueModel& model, const std::string& path);
TissueModel load_tissue_model(const std::string& path);

}  // namespace atlaseg

#endif
