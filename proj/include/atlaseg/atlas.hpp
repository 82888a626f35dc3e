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
#ifndef atlaseg_atlas_hpp
#define atlaseg_atlas_hpp

#include <string>
#include <vector>

#include "atlaseg/transform.hpp"
#include "atlaseg/volume.hpp"

namespace atlaseg {

struct AtlasMember {
  ScalarVolume intensity;
  LabelVolume labels;
  std::string id;

  void validate() const;
};

struct DeformedMember {
  ScalarVolume intensity;
  // one channel per class id (background included), each in [0, 1],
  // summing to 1 at every voxel
  std::vector<ScalarVolume> soft_labels;
  LabelVolume hard_labels;
  std::string id;
};

struct ProbabilisticAtlas {
  ScalarVolume mean_intensity;
  std::vector<ScalarVolume> priors;  // K+1 channels on the target grid
  ClassMap class_map;
  std::vector<std::string> member_ids;
  double lambda = 0.0;

  const Grid3& grid() const { return mean_intensity.grid; }
  int num_classes() const { return static_cast<int>(priors.size()); }
  void validate() const;
};

// Pull the member into the reference grid through `t`: intensity with cubic
// interpolation, labels both as nearest-neighbor hard labels and as linearly
// resampled one-hot channels. Outside the member the soft channels read as
// pure background.
DeformedMember warp_member(const AtlasMember& member, const TransformChain& t, const Grid3& ref_grid);

// Voxelwise means over the deformed members: intensities into the mean
// image, soft label channels into the class priors.
ProbabilisticAtlas build_atlas(const std::vector<DeformedMember>& members);

// priors' = (1 - lambda) * priors + lambda / (K+1)
ProbabilisticAtlas regularize_prior(const ProbabilisticAtlas& atlas, double lambda = 0.01);

// Directory layout: mean_intensity.nii.gz, priors.nii.gz (4D), atlas.json.
void save_atlas(const ProbabilisticAtlas& atlas, const std::string& dir);
ProbabilisticAtlas load_atlas(const std::string& dir);

}  // namespace atlaseg

#endif
