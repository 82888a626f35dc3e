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
#ifndef atlaseg_fusion_hpp
#define atlaseg_fusion_hpp

#include <vector>

#include "atlaseg/volume.hpp"

namespace atlaseg {

struct LabelStack {
  std::vector<LabelVolume> members;

  void validate() const;
};

// Per-voxel argmax of label counts; ties go to the lowest class id. With
// include_background false only foreground votes count and a voxel stays
// background when no member voted foreground.
LabelVolume majority_vote(const LabelStack& stack, bool include_background = true);

// Per-voxel lower median of the sorted raw label codes.
LabelVolume median_fuse(const LabelStack& stack);

}  // namespace atlaseg

#endif
