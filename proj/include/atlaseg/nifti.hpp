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
#ifndef atlaseg_nifti_hpp
#define atlaseg_nifti_hpp

#include <string>
#include <vector>

#include "atlaseg/volume.hpp"

namespace atlaseg {

// NIfTI-1 volumes, .nii or .nii.gz. Supported datatypes: uint8, int16,
// int32, float32, float64. Geometry comes from the sform when present,
// else the qform, else pixdim alone; only spacing and origin are kept.
ScalarVolume load_scalar_nifti(const std::string& path);

// Raw label codes are mapped through class_map to compact ids 0..K.
// A code missing from class_map is an error.
LabelVolume load_label_nifti(const std::string& path, const ClassMap& class_map = mmwhs_class_map());

// Scalars are written as float64 so loads round-trip bit exactly.
void save_nifti(const ScalarVolume& vol, const std::string& path);

// Labels are written as int16 raw class_map codes.
void save_nifti(const LabelVolume& vol, const std::string& path);

// Multi-channel storage for atlas prior maps: a 4D file whose fourth
// dimension indexes the channel. A plain 3D file loads as one channel.
std::vector<ScalarVolume> load_nifti_channels(const std::string& path);
void save_nifti_channels(const std::vector<ScalarVolume>& channels, const std::string& path);

}  // namespace atlaseg

#endif
