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
#ifndef atlaseg_tests_helpers_hpp
#define atlaseg_tests_helpers_hpp

#include <unistd.h>

#include <filesystem>
#include <string>

#include "atlaseg/rng.hpp"
#include "atlaseg/volume.hpp"

namespace atlaseg::testing {

inline Grid3 make_grid(int nx, int ny, int nz, Vector3d spacing = {1, 1, 1},
                       Vector3d origin = {0, 0, 0}) {
  Grid3 g;
  g.dims = {nx, ny, nz};
  g.spacing = spacing;
  g.origin = origin;
  return g;
}

inline ScalarVolume random_volume(const Grid3& grid, std::uint64_t seed, double lo = 0.0,
                                  double hi = 100.0) {
  ScalarVolume v(grid);
  Rng rng(seed);
  for (std::int64_t i = 0; i < v.data.size(); ++i) v.data[i] = rng.uniform(lo, hi);
  return v;
}

inline ScalarVolume smooth_random_volume(const Grid3& grid, std::uint64_t seed) {
  return gaussian_smooth(random_volume(grid, seed), {1.0, 1.0, 1.0});
}

inline LabelVolume random_labels(const Grid3& grid, const ClassMap& class_map,
                                 std::uint64_t seed) {
  LabelVolume v(grid, class_map);
  Rng rng(seed);
  for (auto& x : v.data)
    x = static_cast<std::int32_t>(rng.uniform_index(class_map.size()));
  return v;
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("atlaseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace atlaseg::testing

#endif
