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
#ifndef atlaseg_overlay_hpp
#define atlaseg_overlay_hpp

#include <array>
#include <string>

#include "atlaseg/volume.hpp"

namespace atlaseg {

std::array<unsigned char, 3> class_color(int class_id);

// Axial slice z rendered as a grayscale PNG with colored label contours.
void export_overlay(const ScalarVolume& image, const LabelVolume& labels, int z,
                    const std::string& path);

}  // namespace atlaseg

#endif
