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
#include "atlaseg/fusion.hpp"

#include <algorithm>

namespace atlaseg {

void LabelStack::validate() const {
  if (members.empty()) throw DataError("label stack is empty");
  members.front().validate();
  for (std::size_t i = 1; i < members.size(); ++i) {
    members[i].validate();
    if (!members[i].grid.same_as(members.front().grid))
      throw DataError("label stack members are on different grids");
    if (members[i].class_map != members.front().class_map)
      throw DataError("label stack members use different class maps");
  }
}

LabelVolume majority_vote(const LabelStack& stack, bool include_background) {
  stack.validate();
  const LabelVolume& first = stack.members.front();
  const int num_classes = first.num_classes();
  LabelVolume out(first.grid, first.class_map);

  std::vector<int> counts(static_cast<std::size_t>(num_classes));
  const std::size_t n = out.data.size();
  for (std::size_t v = 0; v < n; ++v) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& m : stack.members) ++counts[static_cast<std::size_t>(m.data[v])];

    const int lowest = include_background ? 0 : 1;
    int best = 0, best_count = 0;
    for (int k = lowest; k < num_classes; ++k)
      if (counts[static_cast<std::size_t>(k)] > best_count) {
        best = k;
        best_count = counts[static_cast<std::size_t>(k)];
      }
    out.data[v] = static_cast<std::int32_t>(best);
  }
  return out;
}

LabelVolume median_fuse(const LabelStack& stack) {
  stack.validate();
  const LabelVolume& first = stack.members.front();
  LabelVolume out(first.grid, first.class_map);

  std::vector<int> codes(stack.members.size());
  const std::size_t n = out.data.size();
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t i = 0; i < codes.size(); ++i)
      codes[i] = first.class_map[static_cast<std::size_t>(stack.members[i].data[v])];
    std::sort(codes.begin(), codes.end());
    const int median_code = codes[(codes.size() - 1) / 2];
    const auto it = std::lower_bound(first.class_map.begin(), first.class_map.end(), median_code);
    out.data[v] = static_cast<std::int32_t>(it - first.class_map.begin());
  }
  return out;
}

}  // namespace atlaseg
