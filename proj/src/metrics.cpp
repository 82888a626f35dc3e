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
#include "atlaseg/metrics.hpp"

#include <json.hpp>

namespace atlaseg {

namespace {

void check_compatible(const LabelVolume& pred, const LabelVolume& gt) {
  if (!pred.grid.same_as(gt.grid)) throw DataError("prediction and ground truth grids differ");
  if (pred.class_map != gt.class_map)
    throw DataError("prediction and ground truth class maps differ");
}

}  // namespace

ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& gt, int class_id) {
  check_compatible(pred, gt);
  ConfusionCounts c;
  const std::size_t n = pred.data.size();
  for (std::size_t v = 0; v < n; ++v) {
    const bool p = pred.data[v] == class_id;
    const bool g = gt.data[v] == class_id;
    c.tp += (p && g);
    c.fp += (p && !g);
    c.fn += (!p && g);
  }
  return c;
}

std::vector<ConfusionCounts> slice_confusion(const LabelVolume& pred, const LabelVolume& gt,
                                             int class_id) {
  check_compatible(pred, gt);
  const auto& d = pred.grid.dims;
  std::vector<ConfusionCounts> out(static_cast<std::size_t>(d[2]));
  const std::int64_t per_slice = static_cast<std::int64_t>(d[0]) * d[1];
  for (int z = 0; z < d[2]; ++z) {
    ConfusionCounts& c = out[static_cast<std::size_t>(z)];
    const std::int64_t base = per_slice * z;
    for (std::int64_t v = base; v < base + per_slice; ++v) {
      const bool p = pred.data[static_cast<std::size_t>(v)] == class_id;
      const bool g = gt.data[static_cast<std::size_t>(v)] == class_id;
      c.tp += (p && g);
      c.fp += (p && !g);
      c.fn += (!p && g);
    }
  }
  return out;
}

double dsc(const ConfusionCounts& c) {
  const std::int64_t denom = 2 * c.tp + c.fn + c.fp;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fn + c.fp;
  return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double voe(const ConfusionCounts& c) { return 1.0 - iou(c); }

double sn(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fn;
  if (denom == 0) return c.fp == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

namespace {

double apply_metric(OverlapMetric metric, const ConfusionCounts& c) {
  switch (metric) {
    case OverlapMetric::Dsc: return dsc(c);
    case OverlapMetric::Voe: return voe(c);
    case OverlapMetric::Sn: return sn(c);
    case OverlapMetric::Iou: return iou(c);
  }
  return 0.0;
}

double slice_mean_impl(const LabelVolume& pred, const LabelVolume& gt, OverlapMetric metric,
                       int class_id, bool* fell_back) {
  const auto slices = slice_confusion(pred, gt, class_id);
  double sum = 0.0;
  int used = 0;
  for (const auto& c : slices) {
    if (c.tp + c.fp + c.fn == 0) continue;  // class absent from both masks in this slice
    sum += apply_metric(metric, c);
    ++used;
  }
  if (used == 0) {
    if (fell_back) *fell_back = true;
    return apply_metric(metric, confusion(pred, gt, class_id));
  }
  if (fell_back) *fell_back = false;
  return sum / used;
}

}  // namespace

double slice_mean_metric(const LabelVolume& pred, const LabelVolume& gt, OverlapMetric metric,
                         int class_id) {
  return slice_mean_impl(pred, gt, metric, class_id, nullptr);
}

EvalReport evaluate(const LabelVolume& pred, const LabelVolume& gt, const std::string& method) {
  check_compatible(pred, gt);

  EvalReport report;
  report.method = method;
  report.class_map = pred.class_map;
  const int num_classes = pred.num_classes();

  for (int k = 0; k < num_classes; ++k) {
    const ConfusionCounts c = confusion(pred, gt, k);
    ClassMetrics vm;
    vm.class_id = k;
    vm.raw_code = pred.class_map[static_cast<std::size_t>(k)];
    vm.dsc = dsc(c);
    vm.voe = voe(c);
    vm.sn = sn(c);
    vm.iou = iou(c);
    vm.empty_convention = (c.tp + c.fp + c.fn == 0);
    report.volume.push_back(vm);

    ClassMetrics sm = vm;
    bool fb_dsc = false, fb_voe = false, fb_sn = false, fb_iou = false;
    sm.dsc = slice_mean_impl(pred, gt, OverlapMetric::Dsc, k, &fb_dsc);
    sm.voe = slice_mean_impl(pred, gt, OverlapMetric::Voe, k, &fb_voe);
    sm.sn = slice_mean_impl(pred, gt, OverlapMetric::Sn, k, &fb_sn);
    sm.iou = slice_mean_impl(pred, gt, OverlapMetric::Iou, k, &fb_iou);
    sm.slice_fallback = fb_dsc || fb_voe || fb_sn || fb_iou;
    report.slice.push_back(sm);
  }

  const int foreground = num_classes - 1;
  auto mean_over_foreground = [&](const std::vector<ClassMetrics>& rows) {
    MetricSummary s;
    if (foreground < 1) return s;
    for (int k = 1; k < num_classes; ++k) {
      s.dsc += rows[static_cast<std::size_t>(k)].dsc;
      s.voe += rows[static_cast<std::size_t>(k)].voe;
      s.sn += rows[static_cast<std::size_t>(k)].sn;
      s.iou += rows[static_cast<std::size_t>(k)].iou;
    }
    s.dsc /= foreground;
    s.voe /= foreground;
    s.sn /= foreground;
    s.iou /= foreground;
    return s;
  };
  report.volume_mean = mean_over_foreground(report.volume);
  report.slice_mean = mean_over_foreground(report.slice);
  return report;
}

namespace {

nlohmann::json metrics_json(const std::vector<ClassMetrics>& rows, const MetricSummary& mean,
                            bool slice_variant) {
  nlohmann::json j;
  j["per_class"] = nlohmann::json::array();
  for (const auto& m : rows) {
    nlohmann::json row;
    row["class_id"] = m.class_id;
    row["raw_code"] = m.raw_code;
    row["dsc"] = m.dsc;
    row["voe"] = m.voe;
    row["sn"] = m.sn;
    row["iou"] = m.iou;
    row["empty_convention"] = m.empty_convention;
    if (slice_variant) row["volume_fallback"] = m.slice_fallback;
    j["per_class"].push_back(std::move(row));
  }
  j["mean"] = {{"dsc", mean.dsc}, {"voe", mean.voe}, {"sn", mean.sn}, {"iou", mean.iou}};
  return j;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["class_map"] = class_map;
  j["runtime_seconds"] = runtime_seconds;
  j["volume"] = metrics_json(volume, volume_mean, false);
  j["slice"] = metrics_json(slice, slice_mean, true);
  return j.dump(2);
}

}  // namespace atlaseg
