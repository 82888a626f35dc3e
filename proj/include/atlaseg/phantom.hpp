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
#ifndef atlaseg_phantom_hpp
#define atlaseg_phantom_hpp

#include <vector>

#include "atlaseg/atlas.hpp"
#include "atlaseg/transform.hpp"

namespace atlaseg {

// Synthetic cardiac-like test volume: up to seven ellipsoidal structures
// (a ventricle pair with a myocardial shell, two atria, two vessels) on a
// constant background, each with its own intensity mean plus Gaussian noise.
struct PhantomSpec {
  Vector3i dims = {32, 32, 32};
  Vector3d spacing = {1.0, 1.0, 1.0};
  Vector3d origin = {0.0, 0.0, 0.0};
  std::uint64_t seed = 0;
  int foreground_classes = 7;
  double background_mean = 20.0;
  std::vector<double> class_means = {60.0, 100.0, 140.0, 180.0, 220.0, 260.0, 300.0};
  double noise_sigma = 10.0;

  void validate() const;
};

AtlasMember generate(const PhantomSpec& spec);

struct PerturbParams {
  double max_rotation_deg = 10.0;
  double max_translation_voxels = 4.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double amplitude_voxels = 2.0;  // largest FFD control displacement
};

struct PerturbResult {
  AtlasMember member;
  TransformChain transform;  // maps warped-member coordinates into the original
};

// Random affine about the volume center composed with a random smooth FFD,
// applied to the member by pull-back resampling (intensity cubic, labels
// nearest). Deterministic for a fixed seed.
PerturbResult perturb(const AtlasMember& member, std::uint64_t seed, const PerturbParams& params);

struct PhantomDataset {
  std::vector<AtlasMember> members;
  std::vector<TransformChain> transforms;  // ground truth per member
};

// n members cut from one noise-free base phantom: each gets its own random
// perturbation and its own fresh noise.
PhantomDataset make_dataset(const PhantomSpec& spec, int n, const PerturbParams& params);

}  // namespace atlaseg

#endif
