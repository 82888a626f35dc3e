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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atlaseg/atlas.hpp"
#include "atlaseg/bayes.hpp"
#include "atlaseg/em.hpp"
#include "atlaseg/fusion.hpp"
#include "atlaseg/log.hpp"
#include "atlaseg/loo.hpp"
#include "atlaseg/metrics.hpp"
#include "atlaseg/nifti.hpp"
#include "atlaseg/overlay.hpp"
#include "atlaseg/phantom.hpp"
#include "atlaseg/registration.hpp"
#include "atlaseg/transform.hpp"
#include "atlaseg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace atlaseg;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

// Registration knobs shared by the register and loo subcommands. The config
// file supplies base values; flags the user actually typed win.
struct RegistrationFlags {
  std::string config_path;
  int levels = 4;
  int bins = 32;
  int samples = 2048;
  int iterations = 500;
  std::uint64_t seed = 0;
  double knot_spacing = 8.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--levels", levels, "pyramid levels");
    cmd->add_option("--bins", bins, "joint histogram bins");
    cmd->add_option("--samples", samples, "metric samples per iteration");
    cmd->add_option("--iterations", iterations, "optimizer iterations per level");
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--knot-spacing", knot_spacing, "finest FFD knot spacing, voxels");
  }

  void apply_config_json(RegistrationConfig& cfg, const json& j) const {
    cfg.levels = j.value("levels", cfg.levels);
    cfg.mi.bins = j.value("bins", cfg.mi.bins);
    cfg.mi.samples_per_iter = j.value("samples", cfg.mi.samples_per_iter);
    cfg.mi.fixed_parzen_order = j.value("fixed_parzen_order", cfg.mi.fixed_parzen_order);
    cfg.mi.moving_parzen_order = j.value("moving_parzen_order", cfg.mi.moving_parzen_order);
    cfg.asgd.iterations = j.value("iterations", cfg.asgd.iterations);
    cfg.asgd.a = j.value("a", cfg.asgd.a);
    cfg.asgd.big_a = j.value("A", cfg.asgd.big_a);
    cfg.asgd.alpha = j.value("alpha", cfg.asgd.alpha);
    cfg.ffd_knot_spacing_voxels = j.value("knot_spacing", cfg.ffd_knot_spacing_voxels);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("stages")) {
      cfg.stages.clear();
      for (const auto& s : j.at("stages")) {
        const std::string name = s.get<std::string>();
        if (name == "affine")
          cfg.stages.push_back(Stage::Affine);
        else if (name == "ffd")
          cfg.stages.push_back(Stage::Ffd);
        else
          throw DataError("unknown registration stage in config: " + name);
      }
    }
  }

  RegistrationConfig build(const CLI::App* cmd) const {
    RegistrationConfig cfg;
    if (!config_path.empty()) apply_config_json(cfg, read_json_file(config_path));
    if (cmd->count("--levels")) cfg.levels = levels;
    if (cmd->count("--bins")) cfg.mi.bins = bins;
    if (cmd->count("--samples")) cfg.mi.samples_per_iter = samples;
    if (cmd->count("--iterations")) cfg.asgd.iterations = iterations;
    if (cmd->count("--seed")) cfg.seed = seed;
    if (cmd->count("--knot-spacing")) cfg.ffd_knot_spacing_voxels = knot_spacing;
    return cfg;
  }
};

std::string default_report_path(std::string out) {
  const std::string suffix = ".json";
  if (out.size() > suffix.size() && out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
    out.resize(out.size() - suffix.size());
  return out + ".report.json";
}

Interpolator parse_interp(const std::string& name) {
  if (name == "nearest") return Interpolator::Nearest;
  if (name == "linear") return Interpolator::Linear;
  if (name == "cubic") return Interpolator::Cubic;
  throw DataError("unknown interpolator: " + name);
}

std::vector<SegMethod> parse_method_list(const std::string& arg) {
  std::vector<SegMethod> methods;
  std::stringstream ss(arg);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "all")
      return {SegMethod::Mvf, SegMethod::Median, SegMethod::Pas, SegMethod::Em, SegMethod::PasEm};
    methods.push_back(parse_method(token));
  }
  if (methods.empty()) throw DataError("no segmentation method given");
  return methods;
}

// Pull the atlas onto the target grid through the fixed-to-moving chain.
ProbabilisticAtlas warp_atlas(const ProbabilisticAtlas& atlas, const TransformChain& chain,
                              const Grid3& target_grid) {
  ProbabilisticAtlas out;
  out.mean_intensity = resample(atlas.mean_intensity, chain, target_grid, Interpolator::Cubic);
  out.priors.reserve(atlas.priors.size());
  for (std::size_t k = 0; k < atlas.priors.size(); ++k) {
    const double background = (k == 0) ? 1.0 : 0.0;
    out.priors.push_back(
        resample(atlas.priors[k], chain, target_grid, Interpolator::Linear, background));
  }
  out.class_map = atlas.class_map;
  out.member_ids = atlas.member_ids;
  out.lambda = atlas.lambda;
  return out;
}

int run_register(const std::string& fixed_path, const std::string& moving_path,
                 const std::string& out_path, const std::string& report_path,
                 const RegistrationConfig& cfg) {
  const ScalarVolume fixed = load_scalar_nifti(fixed_path);
  const ScalarVolume moving = load_scalar_nifti(moving_path);
  const RegistrationResult result = register_pair(fixed, moving, cfg);
  save_transform(result.transform, out_path);
  const std::string rpath = report_path.empty() ? default_report_path(out_path) : report_path;
  write_text_file(rpath, result.report.to_json());
  std::printf("wrote %s and %s (%.1fs)\n", out_path.c_str(), rpath.c_str(),
              result.report.elapsed_seconds);
  return 0;
}

int run_warp(const std::string& input_path, const std::string& transform_path,
             const std::string& ref_path, const std::string& out_path, bool labels,
             Interpolator interp, double background) {
  const TransformChain chain = load_transform(transform_path);
  const Grid3 ref_grid = load_scalar_nifti(ref_path).grid;
  if (labels) {
    const LabelVolume in = load_label_nifti(input_path);
    save_nifti(resample(in, chain, ref_grid, Interpolator::Nearest), out_path);
  } else {
    const ScalarVolume in = load_scalar_nifti(input_path);
    save_nifti(resample(in, chain, ref_grid, interp, background), out_path);
  }
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int run_build_atlas(const std::string& ref_path, const std::vector<std::string>& image_paths,
                    const std::vector<std::string>& label_paths,
                    const std::vector<std::string>& transform_paths, const std::string& out_dir,
                    double lambda) {
  if (image_paths.size() != label_paths.size() || image_paths.size() != transform_paths.size())
    throw DataError("--image, --label and --transform need one entry per member");
  if (image_paths.empty()) throw DataError("atlas construction needs at least one member");

  const Grid3 ref_grid = load_scalar_nifti(ref_path).grid;
  std::vector<DeformedMember> deformed;
  deformed.reserve(image_paths.size());
  for (std::size_t i = 0; i < image_paths.size(); ++i) {
    AtlasMember member;
    member.intensity = load_scalar_nifti(image_paths[i]);
    member.labels = load_label_nifti(label_paths[i]);
    member.id = fs::path(image_paths[i]).filename().string();
    deformed.push_back(warp_member(member, load_transform(transform_paths[i]), ref_grid));
  }
  ProbabilisticAtlas atlas = build_atlas(deformed);
  if (lambda > 0.0) atlas = regularize_prior(atlas, lambda);
  save_atlas(atlas, out_dir);
  std::printf("wrote atlas with %d members to %s\n", static_cast<int>(image_paths.size()),
              out_dir.c_str());
  return 0;
}

int run_tissue_model(const std::vector<std::string>& image_paths,
                     const std::vector<std::string>& label_paths, const std::string& out_path,
                     int bins) {
  if (image_paths.size() != label_paths.size())
    throw DataError("--image and --label need one entry per training pair");
  if (image_paths.empty()) throw DataError("tissue model estimation needs training pairs");

  std::vector<AtlasMember> training(image_paths.size());
  for (std::size_t i = 0; i < image_paths.size(); ++i) {
    training[i].intensity = load_scalar_nifti(image_paths[i]);
    training[i].labels = load_label_nifti(label_paths[i]);
    training[i].id = fs::path(image_paths[i]).filename().string();
  }
  save_tissue_model(estimate_tissue_model(training, bins), out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int run_fuse(const std::string& method, const std::vector<std::string>& input_paths,
             const std::string& out_path, bool exclude_background) {
  LabelStack stack;
  stack.members.reserve(input_paths.size());
  for (const auto& p : input_paths) stack.members.push_back(load_label_nifti(p));

  LabelVolume fused;
  if (method == "mvf")
    fused = majority_vote(stack, !exclude_background);
  else
    fused = median_fuse(stack);
  save_nifti(fused, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

GmmState fit_and_trace(const ScalarVolume& target, const ProbabilisticAtlas& atlas, double tol,
                       int max_iter, const std::string& trace_path) {
  const GmmState state = fit_em(target, atlas, tol, max_iter);
  if (!trace_path.empty()) write_text_file(trace_path, state.to_json());
  return state;
}

int run_segment(const std::string& method, const std::string& atlas_dir,
                const std::string& tissue_model_path, const std::string& target_path,
                const std::string& out_path, double lambda, double tol, int max_iter,
                bool register_atlas, const RegistrationConfig& reg_cfg,
                const std::string& gmm_trace_path) {
  const ScalarVolume target = load_scalar_nifti(target_path);
  ProbabilisticAtlas atlas = load_atlas(atlas_dir);
  if (register_atlas) {
    log_info("registering atlas mean intensity to the target");
    const RegistrationResult reg = register_pair(target, atlas.mean_intensity, reg_cfg);
    atlas = warp_atlas(atlas, reg.transform, target.grid);
  } else if (!atlas.grid().same_as(target.grid)) {
    throw DataError("atlas and target are on different grids (use --register-atlas)");
  }
  if (lambda > 0.0) atlas = regularize_prior(atlas, lambda);

  const bool needs_tissue_model = (method == "pas" || method == "pas+em");
  if (needs_tissue_model && tissue_model_path.empty())
    throw DataError("method " + method + " needs --tissue-model");

  LabelVolume seg;
  if (method == "pas") {
    const TissueModel model = load_tissue_model(tissue_model_path);
    seg = map_classify(atlas, model, target).first;
  } else if (method == "em") {
    const GmmState state = fit_and_trace(target, atlas, tol, max_iter, gmm_trace_path);
    seg = gmm_argmax_labels(state, target.grid, atlas.class_map);
  } else {
    const TissueModel model = load_tissue_model(tissue_model_path);
    const PosteriorField posterior = map_classify(atlas, model, target).second;
    const GmmState state = fit_and_trace(target, atlas, tol, max_iter, gmm_trace_path);
    seg = pas_em_combine(state.memberships, posterior, atlas.class_map).first;
  }
  save_nifti(seg, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int run_evaluate(const std::string& pred_path, const std::string& gt_path, bool slice_mean,
                 const std::string& out_path) {
  const LabelVolume pred = load_label_nifti(pred_path);
  const LabelVolume gt = load_label_nifti(gt_path);
  const EvalReport report = evaluate(pred, gt);
  const MetricSummary& headline = slice_mean ? report.slice_mean : report.volume_mean;
  if (out_path.empty()) {
    std::printf("%s\n", report.to_json().c_str());
  } else {
    write_text_file(out_path, report.to_json());
    std::printf("wrote %s\n", out_path.c_str());
  }
  std::printf("mDSC %.4f  mVOE %.4f  mSn %.4f\n", headline.dsc, headline.voe, headline.sn);
  return 0;
}

int run_loo(const LooConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const LooResult result = leave_one_out_dir(cfg);
  for (const auto& row : result.summary)
    std::printf("%-7s folds=%d  mDSC %.4f ± %.4f  mVOE %.4f  mSn %.4f\n", row.method.c_str(),
                row.folds, row.mean.dsc, row.stddev.dsc, row.mean.voe, row.mean.sn);
  std::printf("wrote %s\n", (fs::path(cfg.out_dir) / "summary.json").string().c_str());
  return 0;
}

int run_phantom(int n, int dims, std::uint64_t seed, double noise, double amplitude,
                const std::string& out_dir) {
  PhantomSpec spec;
  spec.dims = Vector3i{dims, dims, dims};
  spec.seed = seed;
  spec.noise_sigma = noise;
  PerturbParams params;
  params.amplitude_voxels = amplitude;

  const PhantomDataset dataset = make_dataset(spec, n, params);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < dataset.members.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "%03d", static_cast<int>(i));
    const fs::path base = fs::path(out_dir) / id;
    save_nifti(dataset.members[i].intensity, base.string() + "_image.nii.gz");
    save_nifti(dataset.members[i].labels, base.string() + "_label.nii.gz");
    save_transform(dataset.transforms[i], base.string() + "_transform.json");
  }
  std::printf("wrote %d members to %s\n", n, out_dir.c_str());
  return 0;
}

int run_overlay(const std::string& image_path, const std::string& labels_path, int slice,
                const std::string& out_path) {
  const ScalarVolume image = load_scalar_nifti(image_path);
  const LabelVolume labels = load_label_nifti(labels_path);
  export_overlay(image, labels, slice, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atlaseg: multi-atlas whole heart segmentation"};
  app.require_subcommand(1);

  // register
  auto* cmd_register = app.add_subcommand("register", "non-rigid registration of moving onto fixed");
  std::string reg_fixed, reg_moving, reg_out, reg_report;
  RegistrationFlags reg_flags;
  cmd_register->add_option("--fixed", reg_fixed, "fixed image")->required();
  cmd_register->add_option("--moving", reg_moving, "moving image")->required();
  cmd_register->add_option("--out", reg_out, "output transform JSON")->required();
  cmd_register->add_option("--report", reg_report, "cost trace report path");
  reg_flags.add_to(cmd_register);

  // warp
  auto* cmd_warp = app.add_subcommand("warp", "resample a volume through a saved transform");
  std::string warp_input, warp_transform, warp_ref, warp_out, warp_interp = "cubic";
  bool warp_labels = false;
  double warp_background = 0.0;
  cmd_warp->add_option("--input", warp_input, "volume to resample")->required();
  cmd_warp->add_option("--transform", warp_transform, "transform JSON")->required();
  cmd_warp->add_option("--ref", warp_ref, "image defining the output grid")->required();
  cmd_warp->add_option("--out", warp_out, "output volume")->required();
  cmd_warp->add_flag("--labels", warp_labels, "treat the input as a label volume");
  cmd_warp->add_option("--interp", warp_interp, "nearest|linear|cubic")
      ->check(CLI::IsMember({"nearest", "linear", "cubic"}));
  cmd_warp->add_option("--background", warp_background, "fill value outside the input");

  // build-atlas
  auto* cmd_atlas = app.add_subcommand("build-atlas", "average warped members into an atlas");
  std::string atlas_ref, atlas_out;
  std::vector<std::string> atlas_images, atlas_labels, atlas_transforms;
  double atlas_lambda = 0.01;
  cmd_atlas->add_option("--ref", atlas_ref, "image defining the atlas grid")->required();
  cmd_atlas->add_option("--image", atlas_images, "member intensity images")->required();
  cmd_atlas->add_option("--label", atlas_labels, "member label volumes")->required();
  cmd_atlas->add_option("--transform", atlas_transforms, "member transforms")->required();
  cmd_atlas->add_option("--out", atlas_out, "output atlas directory")->required();
  cmd_atlas->add_option("--lambda", atlas_lambda, "uniform prior mix-in weight");

  // tissue-model
  auto* cmd_tissue = app.add_subcommand("tissue-model", "intensity histograms per class");
  std::string tissue_out;
  std::vector<std::string> tissue_images, tissue_labels;
  int tissue_bins = 4096;
  cmd_tissue->add_option("--image", tissue_images, "training intensity images")->required();
  cmd_tissue->add_option("--label", tissue_labels, "training label volumes")->required();
  cmd_tissue->add_option("--out", tissue_out, "output model JSON")->required();
  cmd_tissue->add_option("--bins", tissue_bins, "histogram bins");

  // fuse
  auto* cmd_fuse = app.add_subcommand("fuse", "fuse candidate label volumes");
  std::string fuse_method, fuse_out;
  std::vector<std::string> fuse_inputs;
  bool fuse_exclude_background = false;
  cmd_fuse->add_option("--method", fuse_method, "mvf|median")
      ->required()
      ->check(CLI::IsMember({"mvf", "median"}));
  cmd_fuse->add_option("--inputs", fuse_inputs, "candidate label volumes")->required();
  cmd_fuse->add_option("--out", fuse_out, "fused labels")->required();
  cmd_fuse->add_flag("--exclude-background-votes", fuse_exclude_background,
                     "majority vote over foreground votes only");

  // segment
  auto* cmd_segment = app.add_subcommand("segment", "segment a target with an atlas");
  std::string seg_method, seg_atlas, seg_tissue, seg_target, seg_out, seg_trace;
  double seg_lambda = 0.0, seg_tol = 1e-6;
  int seg_max_iter = 500;
  bool seg_register = false;
  RegistrationFlags seg_reg_flags;
  cmd_segment->add_option("--method", seg_method, "pas|em|pas+em")
      ->required()
      ->check(CLI::IsMember({"pas", "em", "pas+em"}));
  cmd_segment->add_option("--atlas", seg_atlas, "atlas directory")->required();
  cmd_segment->add_option("--tissue-model", seg_tissue, "tissue model JSON (pas, pas+em)");
  cmd_segment->add_option("--target", seg_target, "target image")->required();
  cmd_segment->add_option("--out", seg_out, "output labels")->required();
  cmd_segment->add_option("--lambda", seg_lambda, "extra uniform prior mix-in");
  cmd_segment->add_option("--tol", seg_tol, "EM convergence tolerance");
  cmd_segment->add_option("--max-iter", seg_max_iter, "EM iteration cap");
  cmd_segment->add_option("--gmm-trace", seg_trace, "write the fitted mixture as JSON");
  cmd_segment->add_flag("--register-atlas", seg_register,
                        "register the atlas to the target before segmenting");
  seg_reg_flags.add_to(cmd_segment);

  // evaluate
  auto* cmd_eval = app.add_subcommand("evaluate", "overlap metrics between two segmentations");
  std::string eval_pred, eval_gt, eval_out;
  bool eval_slice = false;
  cmd_eval->add_option("--pred", eval_pred, "predicted labels")->required();
  cmd_eval->add_option("--gt", eval_gt, "ground-truth labels")->required();
  cmd_eval->add_flag("--slice-mean", eval_slice, "headline numbers from the slice means");
  cmd_eval->add_option("--out", eval_out, "report JSON (stdout when omitted)");

  // loo
  auto* cmd_loo = app.add_subcommand("loo", "leave-one-out study over a dataset directory");
  std::string loo_data, loo_out, loo_method = "all";
  int loo_workers = 1;
  double loo_lambda = 0.01, loo_tol = 1e-6;
  int loo_tissue_bins = 4096, loo_max_iter = 500;
  bool loo_exclude_background = false;
  RegistrationFlags loo_reg_flags;
  cmd_loo->add_option("--data", loo_data, "dataset directory")->required();
  cmd_loo->add_option("--out", loo_out, "results directory")->required();
  cmd_loo->add_option("--method", loo_method, "comma list of mvf,median,pas,em,pas+em or all");
  cmd_loo->add_option("--workers", loo_workers, "parallel folds");
  cmd_loo->add_option("--lambda", loo_lambda, "uniform prior mix-in weight");
  cmd_loo->add_option("--tissue-bins", loo_tissue_bins, "tissue model bins");
  cmd_loo->add_option("--tol", loo_tol, "EM convergence tolerance");
  cmd_loo->add_option("--max-iter", loo_max_iter, "EM iteration cap");
  cmd_loo->add_flag("--exclude-background-votes", loo_exclude_background,
                    "majority vote over foreground votes only");
  loo_reg_flags.add_to(cmd_loo);

  // phantom
  auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic dataset");
  int phantom_n = 5, phantom_dims = 32;
  std::uint64_t phantom_seed = 0;
  double phantom_noise = 10.0, phantom_amplitude = 2.0;
  std::string phantom_out;
  cmd_phantom->add_option("--n", phantom_n, "number of members");
  cmd_phantom->add_option("--dims", phantom_dims, "cubic volume edge, voxels");
  cmd_phantom->add_option("--seed", phantom_seed, "RNG seed");
  cmd_phantom->add_option("--noise", phantom_noise, "intensity noise sigma");
  cmd_phantom->add_option("--amplitude", phantom_amplitude, "FFD perturbation, voxels");
  cmd_phantom->add_option("--out", phantom_out, "output directory")->required();

  // overlay
  auto* cmd_overlay = app.add_subcommand("overlay", "PNG slice with label contours");
  std::string ov_image, ov_labels, ov_out;
  int ov_slice = 0;
  cmd_overlay->add_option("--image", ov_image, "grayscale background image")->required();
  cmd_overlay->add_option("--labels", ov_labels, "label volume")->required();
  cmd_overlay->add_option("--slice", ov_slice, "axial slice index")->required();
  cmd_overlay->add_option("--out", ov_out, "output PNG")->required();

  try {
    app.parse(argc, argv);

    if (*cmd_register)
      return run_register(reg_fixed, reg_moving, reg_out, reg_report,
                          reg_flags.build(cmd_register));
    if (*cmd_warp)
      return run_warp(warp_input, warp_transform, warp_ref, warp_out, warp_labels,
                      parse_interp(warp_interp), warp_background);
    if (*cmd_atlas)
      return run_build_atlas(atlas_ref, atlas_images, atlas_labels, atlas_transforms, atlas_out,
                             atlas_lambda);
    if (*cmd_tissue) return run_tissue_model(tissue_images, tissue_labels, tissue_out, tissue_bins);
    if (*cmd_fuse) return run_fuse(fuse_method, fuse_inputs, fuse_out, fuse_exclude_background);
    if (*cmd_segment)
      return run_segment(seg_method, seg_atlas, seg_tissue, seg_target, seg_out, seg_lambda,
                         seg_tol, seg_max_iter, seg_register, seg_reg_flags.build(cmd_segment),
                         seg_trace);
    if (*cmd_eval) return run_evaluate(eval_pred, eval_gt, eval_slice, eval_out);
    if (*cmd_loo) {
      LooConfig cfg;
      cfg.data_dir = loo_data;
      cfg.out_dir = loo_out;
      cfg.methods = parse_method_list(loo_method);
      cfg.registration = loo_reg_flags.build(cmd_loo);
      cfg.lambda = loo_lambda;
      cfg.tissue_bins = loo_tissue_bins;
      cfg.em_tol = loo_tol;
      cfg.em_max_iter = loo_max_iter;
      cfg.exclude_background_votes = loo_exclude_background;
      cfg.workers = loo_workers;
      return run_loo(cfg);
    }
    if (*cmd_phantom)
      return run_phantom(phantom_n, phantom_dims, phantom_seed, phantom_noise, phantom_amplitude,
                         phantom_out);
    if (*cmd_overlay) return run_overlay(ov_image, ov_labels, ov_slice, ov_out);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const DataError& e) {
    log_error(e.what());
    return 2;
  } catch (const NumericError& e) {
    log_error(e.what());
    return 3;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 2;
  }
  return 0;
}
