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
#ifndef atlaseg_metrics_hpp
#define atlaseg_metrics_hpp

#include <string>
#include <vector>

#include "atlaseg/volume.hpp"

namespace atlaseg {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& gt, int class_id);

// one entry per axial (z) slice
std::vector<ConfusionCounts> slice_confusion(const LabelVolume& pred, const LabelVolume& gt,
                                             int class_id);

// Overlap scores from the counts. When both masks are empty the score is
// perfect by convention (1 for DSC/Sn/IoU, 0 for VOE).
double dsc(const ConfusionCounts& c);
double voe(const ConfusionCounts& c);
double sn(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);

enum class OverlapMetric { Dsc, Voe, Sn, Iou };

// Metric averaged over the axial slices where the class appears in either
// volume; falls back to the whole-volume metric when it appears in none.
double slice_mean_metric(const LabelVolume& pred, const LabelVolume& gt, OverlapMetric metric,
                         int class_id);

struct ClassMetrics {
  int class_id = 0;
  int raw_code = 0;
  double dsc = 0.0;
  double voe = 0.0;
  double sn = 0.0;
  double iou = 0.0;
  bool empty_convention = false;  // both masks empty
  bool slice_fallback = false;    // slice average fell back to whole volume
};

struct MetricSummary {
  double dsc = 0.0;
  double voe = 0.0;
  double sn = 0.0;
  double iou = 0.0;
};

struct EvalReport {
  std::string method;
  ClassMap class_map;
  std::vector<ClassMetrics> volume;
  std::vector<ClassMetrics> slice;
  MetricSummary volume_mean;  // over foreground classes
  MetricSummary slice_mean;
  double runtime_seconds = 0.0;

  std::string to_json() const;
};

// Whole-volume and slice-averaged scores for every class, plus foreground
// means.
EvalReport evaluate(const LabelVolume& pred, const LabelVolume& gt, const std::string& method = "");

}  // namespace atlaseg

#endif
