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
#include "atlaseg/atlas.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "atlaseg/nifti.hpp"

namespace atlaseg {

void AtlasMember::validate() const {
  intensity.validate();
  labels.validate();
  if (!intensity.grid.same_as(labels.grid))
    throw DataError("atlas member intensity and labels are on different grids");
}

void ProbabilisticAtlas::validate() const {
  mean_intensity.validate();
  validate_class_map(class_map);
  if (priors.size() != class_map.size())
    throw DataError("prior channel count does not match class map");
  for (const auto& p : priors) {
    p.validate();
    if (!p.grid.same_as(mean_intensity.grid)) throw DataError("prior channel grid mismatch");
  }
  const std::int64_t n = mean_intensity.grid.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (const auto& p : priors) {
      if (p.data[v] < 0.0) throw DataError("negative prior probability");
      sum += p.data[v];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("prior vector does not sum to 1");
  }
}

DeformedMember warp_member(const AtlasMember& member, const TransformChain& t, const Grid3& ref_grid) {
  member.validate();

  DeformedMember out;
  out.id = member.id;
  out.intensity = resample(member.intensity, t, ref_grid, Interpolator::Cubic);
  out.hard_labels = resample(member.labels, t, ref_grid, Interpolator::Nearest);

  const int num_classes = member.labels.num_classes();
  out.soft_labels.reserve(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    ScalarVolume indicator(member.labels.grid);
    for (std::int64_t v = 0; v < indicator.data.size(); ++v)
      indicator.data[v] = (member.labels.data[static_cast<std::size_t>(v)] == k) ? 1.0 : 0.0;
    // background extends past the member domain, so channel 0 reads 1 outside
    const double background = (k == 0) ? 1.0 : 0.0;
    out.soft_labels.push_back(resample(indicator, t, ref_grid, Interpolator::Linear, background));
  }
  return out;
}

ProbabilisticAtlas build_atlas(const std::vector<DeformedMember>& members) {
  if (members.empty()) throw DataError("cannot build an atlas from zero members");
  const Grid3& grid = members.front().intensity.grid;
  const std::size_t num_classes = members.front().soft_labels.size();
  for (const auto& m : members) {
    if (!m.intensity.grid.same_as(grid)) throw DataError("deformed member grid mismatch");
    if (m.soft_labels.size() != num_classes) throw DataError("deformed member channel count mismatch");
    for (const auto& c : m.soft_labels)
      if (!c.grid.same_as(grid)) throw DataError("deformed member channel grid mismatch");
  }

  ProbabilisticAtlas atlas;
  atlas.class_map = members.front().hard_labels.class_map;
  atlas.mean_intensity = ScalarVolume(grid);
  atlas.priors.assign(num_classes, ScalarVolume(grid));

  const double inv_n = 1.0 / static_cast<double>(members.size());
  for (const auto& m : members) {
    atlas.mean_intensity.data += m.intensity.data;
    for (std::size_t k = 0; k < num_classes; ++k) atlas.priors[k].data += m.soft_labels[k].data;
    atlas.member_ids.push_back(m.id);
  }
  atlas.mean_intensity.data *= inv_n;
  for (auto& p : atlas.priors) p.data *= inv_n;
  return atlas;
}

ProbabilisticAtlas regularize_prior(const ProbabilisticAtlas& atlas, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw DataError("prior mixing weight must be in [0, 1]");
  ProbabilisticAtlas out = atlas;
  const double uniform = lambda / static_cast<double>(atlas.priors.size());
  for (auto& p : out.priors) p.data = (1.0 - lambda) * p.data + uniform;
  out.lambda = lambda;
  return out;
}

void save_atlas(const ProbabilisticAtlas& atlas, const std::string& dir) {
  atlas.validate();
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_nifti(atlas.mean_intensity, (base / "mean_intensity.nii.gz").string());
  save_nifti_channels(atlas.priors, (base / "priors.nii.gz").string());

  nlohmann::json j;
  j["version"] = 1;
  j["class_map"] = atlas.class_map;
  j["member_ids"] = atlas.member_ids;
  j["lambda"] = atlas.lambda;
  std::ofstream out(base / "atlas.json");
  if (!out) throw DataError("cannot write atlas sidecar in " + dir);
  out << j.dump(2) << "\n";
}

ProbabilisticAtlas load_atlas(const std::string& dir) {
  const std::filesystem::path base(dir);
  std::ifstream in(base / "atlas.json");
  if (!in) throw DataError("missing atlas.json in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("atlas.json is not valid JSON: ") + e.what());
  }

  ProbabilisticAtlas atlas;
  if (!j.contains("class_map")) throw DataError("atlas.json: missing class_map");
  atlas.class_map = j["class_map"].get<ClassMap>();
  validate_class_map(atlas.class_map);
  if (j.contains("member_ids")) atlas.member_ids = j["member_ids"].get<std::vector<std::string>>();
  atlas.lambda = j.value("lambda", 0.0);

  atlas.mean_intensity = load_scalar_nifti((base / "mean_intensity.nii.gz").string());
  atlas.priors = load_nifti_channels((base / "priors.nii.gz").string());
  if (atlas.priors.size() != atlas.class_map.size())
    throw DataError("atlas prior channel count does not match class map in " + dir);
  atlas.validate();
  return atlas;
}

}  // namespace atlaseg
