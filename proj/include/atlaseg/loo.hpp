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
#ifndef atlaseg_loo_hpp
#define atlaseg_loo_hpp

#include <string>
#include <vector>

#include "atlaseg/atlas.hpp"
#include "atlaseg/metrics.hpp"
#include "atlaseg/registration.hpp"

namespace atlaseg {

enum class SegMethod { Mvf, Median, Pas, Em, PasEm };

SegMethod parse_method(const std::string& name);
std::string method_name(SegMethod method);

struct LooConfig {
  std::string data_dir;
  std::string out_dir;  // empty disables artifact output
  std::vector<SegMethod> methods = {SegMethod::Mvf, SegMethod::Median, SegMethod::Pas,
                                    SegMethod::Em, SegMethod::PasEm};
  RegistrationConfig registration;
  double lambda = 0.01;
  int tissue_bins = 4096;
  double em_tol = 1e-6;
  int em_max_iter = 500;
  bool exclude_background_votes = false;
  int workers = 1;
  ClassMap class_map = mmwhs_class_map();
};

struct FoldReport {
  std::string target_id;
  EvalReport report;
};

struct LooSummaryRow {
  std::string method;
  MetricSummary mean;
  MetricSummary stddev;
  int folds = 0;
};

struct LooResult {
  std::vector<FoldReport> folds;
  std::vector<LooSummaryRow> summary;

  const LooSummaryRow& row(SegMethod method) const;
  std::string to_json() const;
};

// Hold each member out in turn, register the rest onto it, and segment it
// with every requested method from the shared registrations.
LooResult leave_one_out(const std::vector<AtlasMember>& members, const LooConfig& cfg);

// Dataset layout: <id>_image.nii.gz plus <id>_label.nii.gz per member.
std::vector<AtlasMember> load_dataset(const std::string& dir, const ClassMap& class_map);

// load_dataset + leave_one_out + artifacts under cfg.out_dir
LooResult leave_one_out_dir(const LooConfig& cfg);

}  // namespace atlaseg

#endif
