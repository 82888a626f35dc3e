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
#include "atlaseg/loo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>

#include <json.hpp>

#include "atlaseg/bayes.hpp"
#include "atlaseg/em.hpp"
#include "atlaseg/fusion.hpp"
#include "atlaseg/log.hpp"
#include "atlaseg/nifti.hpp"

namespace atlaseg {

SegMethod parse_method(const std::string& name) {
  if (name == "mvf") return SegMethod::Mvf;
  if (name == "median") return SegMethod::Median;
  if (name == "pas") return SegMethod::Pas;
  if (name == "em") return SegMethod::Em;
  if (name == "pas+em") return SegMethod::PasEm;
  throw DataError("unknown method '" + name + "' (expected mvf|median|pas|em|pas+em)");
}

std::string method_name(SegMethod method) {
  switch (method) {
    case SegMethod::Mvf: return "mvf";
    case SegMethod::Median: return "median";
    case SegMethod::Pas: return "pas";
    case SegMethod::Em: return "em";
    case SegMethod::PasEm: return "pas+em";
  }
  return "?";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

bool wants(const LooConfig& cfg, SegMethod m) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

struct FoldOutput {
  std::string target_id;
  std::vector<std::pair<SegMethod, LabelVolume>> segmentations;
  std::vector<EvalReport> reports;
};

FoldOutput run_fold(const std::vector<AtlasMember>& members, std::size_t target_index,
                    const LooConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const AtlasMember& target = members[target_index];

  std::vector<const AtlasMember*> train;
  for (std::size_t i = 0; i < members.size(); ++i)
    if (i != target_index) train.push_back(&members[i]);

  std::vector<DeformedMember> deformed;
  deformed.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    RegistrationConfig reg = cfg.registration;
    reg.seed = splitmix64(splitmix64(reg.seed ^ (0xf01d + target_index)) + i);
    log_printf(LogLevel::Info, "fold %s: registering member %s", target.id.c_str(),
               train[i]->id.c_str());
    const RegistrationResult res = register_pair(target.intensity, train[i]->intensity, reg);
    deformed.push_back(warp_member(*train[i], res.transform, target.intensity.grid));
  }

  FoldOutput out;
  out.target_id = target.id;

  const bool need_atlas = wants(cfg, SegMethod::Pas) || wants(cfg, SegMethod::Em) ||
                          wants(cfg, SegMethod::PasEm);
  const bool need_tissue = wants(cfg, SegMethod::Pas) || wants(cfg, SegMethod::PasEm);
  const bool need_em = wants(cfg, SegMethod::Em) || wants(cfg, SegMethod::PasEm);

  if (wants(cfg, SegMethod::Mvf) || wants(cfg, SegMethod::Median)) {
    LabelStack stack;
    for (const auto& d : deformed) stack.members.push_back(d.hard_labels);
    if (wants(cfg, SegMethod::Mvf))
      out.segmentations.emplace_back(SegMethod::Mvf,
                                     majority_vote(stack, !cfg.exclude_background_votes));
    if (wants(cfg, SegMethod::Median))
      out.segmentations.emplace_back(SegMethod::Median, median_fuse(stack));
  }

  if (need_atlas) {
    // the mixture is seeded from the raw atlas: blending in the uniform
    // floor would drag the moments of small structures toward the global
    // ones, while the MAP prior still needs the floor to stay nonzero
    const ProbabilisticAtlas raw_atlas = build_atlas(deformed);
    const ProbabilisticAtlas atlas = regularize_prior(raw_atlas, cfg.lambda);

    PosteriorField posterior;
    if (need_tissue) {
      std::vector<AtlasMember> pairs;
      pairs.reserve(train.size());
      for (const AtlasMember* m : train) pairs.push_back(*m);
      const TissueModel model = estimate_tissue_model(pairs, cfg.tissue_bins);
      auto [labels, field] = map_classify(atlas, model, target.intensity);
      posterior = std::move(field);
      if (wants(cfg, SegMethod::Pas))
        out.segmentations.emplace_back(SegMethod::Pas, std::move(labels));
    }

    if (need_em) {
      const GmmState state = fit_em(target.intensity, raw_atlas, cfg.em_tol, cfg.em_max_iter);
      if (wants(cfg, SegMethod::Em))
        out.segmentations.emplace_back(
            SegMethod::Em, gmm_argmax_labels(state, target.intensity.grid, atlas.class_map));
      if (wants(cfg, SegMethod::PasEm)) {
        auto [labels, field] = pas_em_combine(state.memberships, posterior, atlas.class_map);
        out.segmentations.emplace_back(SegMethod::PasEm, std::move(labels));
      }
    }
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  for (const auto& [method, seg] : out.segmentations) {
    EvalReport report = evaluate(seg, target.labels, method_name(method));
    report.runtime_seconds = elapsed;
    out.reports.push_back(std::move(report));
  }
  return out;
}

double metric_of(const MetricSummary& s, int which) {
  switch (which) {
    case 0: return s.dsc;
    case 1: return s.voe;
    case 2: return s.sn;
    default: return s.iou;
  }
}

void set_metric(MetricSummary& s, int which, double v) {
  switch (which) {
    case 0: s.dsc = v; break;
    case 1: s.voe = v; break;
    case 2: s.sn = v; break;
    default: s.iou = v; break;
  }
}

}  // namespace

const LooSummaryRow& LooResult::row(SegMethod method) const {
  const std::string name = method_name(method);
  for (const auto& r : summary)
    if (r.method == name) return r;
  throw DataError("no summary row for method " + name);
}

std::string LooResult::to_json() const {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json jf = nlohmann::json::parse(f.report.to_json());
    jf["target_id"] = f.target_id;
    j["folds"].push_back(std::move(jf));
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& r : summary) {
    nlohmann::json jr;
    jr["method"] = r.method;
    jr["folds"] = r.folds;
    jr["mean"] = {{"dsc", r.mean.dsc}, {"voe", r.mean.voe}, {"sn", r.mean.sn}, {"iou", r.mean.iou}};
    jr["std"] = {{"dsc", r.stddev.dsc},
                 {"voe", r.stddev.voe},
                 {"sn", r.stddev.sn},
                 {"iou", r.stddev.iou}};
    j["summary"].push_back(std::move(jr));
  }
  return j.dump(2);
}

LooResult leave_one_out(const std::vector<AtlasMember>& members, const LooConfig& cfg) {
  if (members.size() < 2) throw DataError("leave-one-out needs at least 2 members");
  if (cfg.methods.empty()) throw DataError("no segmentation methods requested");
  if (cfg.workers < 1) throw DataError("worker count must be positive");

  std::vector<FoldOutput> outputs(members.size());
  const int workers = std::min<int>(cfg.workers, static_cast<int>(members.size()));
  for (std::size_t begin = 0; begin < members.size(); begin += static_cast<std::size_t>(workers)) {
    const std::size_t end = std::min(members.size(), begin + static_cast<std::size_t>(workers));
    std::vector<std::future<FoldOutput>> batch;
    for (std::size_t t = begin; t < end; ++t)
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                 [&members, t, &cfg] { return run_fold(members, t, cfg); }));
    for (std::size_t t = begin; t < end; ++t) outputs[t] = batch[t - begin].get();
  }

  LooResult result;
  const bool write = !cfg.out_dir.empty();
  if (write) std::filesystem::create_directories(cfg.out_dir);

  for (auto& out : outputs) {
    if (write) {
      const std::filesystem::path fold_dir =
          std::filesystem::path(cfg.out_dir) / ("fold_" + out.target_id);
      std::filesystem::create_directories(fold_dir);
      for (const auto& [method, seg] : out.segmentations) {
        std::string tag = method_name(method);
        std::replace(tag.begin(), tag.end(), '+', '_');
        save_nifti(seg, (fold_dir / ("seg_" + tag + ".nii.gz")).string());
      }
      for (const auto& report : out.reports) {
        std::string tag = report.method;
        std::replace(tag.begin(), tag.end(), '+', '_');
        std::ofstream f(fold_dir / ("report_" + tag + ".json"));
        f << report.to_json() << "\n";
      }
    }
    for (auto& report : out.reports)
      result.folds.push_back(FoldReport{out.target_id, std::move(report)});
  }

  for (const SegMethod method : cfg.methods) {
    LooSummaryRow row;
    row.method = method_name(method);
    std::vector<const EvalReport*> reports;
    for (const auto& f : result.folds)
      if (f.report.method == row.method) reports.push_back(&f.report);
    row.folds = static_cast<int>(reports.size());
    for (int w = 0; w < 4; ++w) {
      double mean = 0.0;
      for (const auto* r : reports) mean += metric_of(r->volume_mean, w);
      if (!reports.empty()) mean /= static_cast<double>(reports.size());
      double var = 0.0;
      for (const auto* r : reports) {
        const double d = metric_of(r->volume_mean, w) - mean;
        var += d * d;
      }
      var = reports.size() > 1 ? var / static_cast<double>(reports.size() - 1) : 0.0;
      set_metric(row.mean, w, mean);
      set_metric(row.stddev, w, std::sqrt(var));
    }
    result.summary.push_back(std::move(row));
  }

  if (write) {
    std::ofstream f(std::filesystem::path(cfg.out_dir) / "summary.json");
    f << result.to_json() << "\n";
  }
  return result;
}

std::vector<AtlasMember> load_dataset(const std::string& dir, const ClassMap& class_map) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir);

  std::map<std::string, std::string> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    for (const char* suffix : {"_image.nii.gz", "_image.nii"}) {
      if (name.size() > std::strlen(suffix) &&
          name.compare(name.size() - std::strlen(suffix), std::strlen(suffix), suffix) == 0) {
        images[name.substr(0, name.size() - std::strlen(suffix))] = entry.path().string();
        break;
      }
    }
  }
  if (images.empty()) throw DataError("no <id>_image.nii[.gz] files in " + dir);

  std::vector<AtlasMember> members;
  for (const auto& [id, image_path] : images) {
    std::string label_path;
    for (const char* suffix : {"_label.nii.gz", "_label.nii"}) {
      const auto candidate = std::filesystem::path(dir) / (id + suffix);
      if (std::filesystem::exists(candidate)) {
        label_path = candidate.string();
        break;
      }
    }
    if (label_path.empty()) throw DataError("missing label file for dataset member " + id);

    AtlasMember m;
    m.id = id;
    m.intensity = load_scalar_nifti(image_path);
    m.labels = load_label_nifti(label_path, class_map);
    m.validate();
    members.push_back(std::move(m));
  }
  return members;
}

LooResult leave_one_out_dir(const LooConfig& cfg) {
  return leave_one_out(load_dataset(cfg.data_dir, cfg.class_map), cfg);
}

}  // namespace atlaseg
