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
#include "doctest.h"

#include "atlaseg/metrics.hpp"
#include "helpers.hpp"

#include <json.hpp>

#include <cmath>
#include <vector>

using namespace atlaseg;
using namespace atlaseg::testing;

TEST_CASE("a perfect prediction produces no false counts") {
  const LabelVolume gt = random_labels(make_grid(6, 6, 6), mmwhs_class_map(), 3);
  for (int k = 0; k < 8; ++k) {
    const ConfusionCounts c = confusion(gt, gt, k);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
  }
}

TEST_CASE("disjoint masks share no true positives") {
  const Grid3 grid = make_grid(4, 4, 4);
  LabelVolume pred(grid, mmwhs_class_map());
  LabelVolume gt(grid, mmwhs_class_map());
  for (std::size_t v = 0; v < pred.data.size(); ++v) {
    pred.data[v] = (v < 10) ? 1 : 0;
    gt.data[v] = (v >= 10 && v < 25) ? 1 : 0;
  }
  const ConfusionCounts c = confusion(pred, gt, 1);
  CHECK(c.tp == 0);
  CHECK(c.fp == 10);
  CHECK(c.fn == 15);
}

TEST_CASE("hand-built masks give the expected counts and scores") {
  const Grid3 grid = make_grid(3, 3, 1);
  LabelVolume pred(grid, mmwhs_class_map());
  LabelVolume gt(grid, mmwhs_class_map());
  // ground truth occupies five cells, prediction hits three of them and
  // adds one stray cell: TP=3, FN=2, FP=1
  for (int v : {0, 1, 2, 3, 4}) gt.data[static_cast<std::size_t>(v)] = 1;
  for (int v : {0, 1, 2, 7}) pred.data[static_cast<std::size_t>(v)] = 1;

  const ConfusionCounts c = confusion(pred, gt, 1);
  CHECK(c.tp == 3);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);

  CHECK(dsc(c) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(voe(c) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sn(c) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(iou(c) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("true positives plus false negatives equal the reference volume") {
  const LabelVolume pred = random_labels(make_grid(5, 5, 5), mmwhs_class_map(), 4);
  const LabelVolume gt = random_labels(make_grid(5, 5, 5), mmwhs_class_map(), 5);
  for (int k = 0; k < 8; ++k) {
    const ConfusionCounts c = confusion(pred, gt, k);
    std::int64_t volume = 0;
    for (std::int32_t id : gt.data) volume += (id == k);
    CHECK(c.tp + c.fn == volume);
    CHECK(c.tp >= 0);
    CHECK(c.fp >= 0);
    CHECK(c.fn >= 0);
  }
}

TEST_CASE("identical non-empty masks score perfectly") {
  ConfusionCounts c;
  c.tp = 42;
  CHECK(dsc(c) == 1.0);
  CHECK(sn(c) == 1.0);
  CHECK(iou(c) == 1.0);
  CHECK(voe(c) == 0.0);
}

TEST_CASE("empty-versus-empty scores perfectly by convention") {
  const ConfusionCounts c;
  CHECK(dsc(c) == 1.0);
  CHECK(voe(c) == 0.0);
  CHECK(sn(c) == 1.0);
  CHECK(iou(c) == 1.0);
}

TEST_CASE("one-sided empties score zero") {
  ConfusionCounts miss;
  miss.fn = 7;  // class exists only in the ground truth
  CHECK(dsc(miss) == 0.0);
  CHECK(sn(miss) == 0.0);
  CHECK(iou(miss) == 0.0);
  CHECK(voe(miss) == 1.0);

  ConfusionCounts ghost;
  ghost.fp = 7;  // class exists only in the prediction
  CHECK(dsc(ghost) == 0.0);
  CHECK(sn(ghost) == 0.0);
  CHECK(iou(ghost) == 0.0);
  CHECK(voe(ghost) == 1.0);
}

TEST_CASE("overlap scores obey the pairwise identities") {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionCounts c;
    c.tp = static_cast<std::int64_t>(rng.uniform_index(1000));
    c.fp = static_cast<std::int64_t>(rng.uniform_index(1000));
    c.fn = static_cast<std::int64_t>(rng.uniform_index(1000));
    const double i = iou(c);
    REQUIRE(std::abs(dsc(c) - 2.0 * i / (1.0 + i)) < 1e-12);
    REQUIRE(voe(c) == 1.0 - i);
    REQUIRE(dsc(c) >= 0.0);
    REQUIRE(dsc(c) <= 1.0);
    REQUIRE(voe(c) >= 0.0);
    REQUIRE(voe(c) <= 1.0);
    REQUIRE(sn(c) >= 0.0);
    REQUIRE(sn(c) <= 1.0);
  }
}

TEST_CASE("slice counts concatenate to the volume counts") {
  const LabelVolume pred = random_labels(make_grid(5, 5, 7), mmwhs_class_map(), 7);
  const LabelVolume gt = random_labels(make_grid(5, 5, 7), mmwhs_class_map(), 8);
  for (int k = 0; k < 8; ++k) {
    const ConfusionCounts whole = confusion(pred, gt, k);
    ConfusionCounts merged;
    for (const ConfusionCounts& c : slice_confusion(pred, gt, k)) {
      merged.tp += c.tp;
      merged.fp += c.fp;
      merged.fn += c.fn;
    }
    CHECK(merged.tp == whole.tp);
    CHECK(merged.fp == whole.fp);
    CHECK(merged.fn == whole.fn);
  }
}

TEST_CASE("a class confined to one slice scores as that slice") {
  const Grid3 grid = make_grid(4, 4, 4);
  LabelVolume pred(grid, mmwhs_class_map());
  LabelVolume gt(grid, mmwhs_class_map());
  gt.at(0, 0, 2) = 1;
  gt.at(1, 0, 2) = 1;
  pred.at(0, 0, 2) = 1;  // TP=1, FN=1 in slice 2: DSC 2/3

  CHECK(slice_mean_metric(pred, gt, OverlapMetric::Dsc, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(slice_mean_metric(pred, gt, OverlapMetric::Sn, 1) == doctest::Approx(0.5));
}

TEST_CASE("identical volumes have a perfect slice-averaged score") {
  const LabelVolume gt = random_labels(make_grid(4, 4, 4), mmwhs_class_map(), 9);
  for (int k = 0; k < 8; ++k)
    CHECK(slice_mean_metric(gt, gt, OverlapMetric::Dsc, k) == 1.0);
}

TEST_CASE("slice averaging matches a direct per-slice loop") {
  const LabelVolume pred = random_labels(make_grid(4, 4, 4), mmwhs_class_map(), 10);
  const LabelVolume gt = random_labels(make_grid(4, 4, 4), mmwhs_class_map(), 11);
  for (int k = 0; k < 8; ++k) {
    const auto slices = slice_confusion(pred, gt, k);
    double sum = 0.0;
    int used = 0;
    for (const auto& c : slices) {
      if (c.tp + c.fp + c.fn == 0) continue;
      sum += dsc(c);
      ++used;
    }
    const double expected = (used > 0) ? sum / used : dsc(confusion(pred, gt, k));
    CHECK(slice_mean_metric(pred, gt, OverlapMetric::Dsc, k) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("a class absent everywhere falls back to the volume convention") {
  const Grid3 grid = make_grid(4, 4, 4);
  const LabelVolume empty1(grid, mmwhs_class_map());
  const LabelVolume empty2(grid, mmwhs_class_map());
  CHECK(slice_mean_metric(empty1, empty2, OverlapMetric::Dsc, 5) == 1.0);

  const EvalReport report = evaluate(empty1, empty2);
  CHECK(report.slice[5].slice_fallback);
  CHECK(report.volume[5].empty_convention);
}

TEST_CASE("mismatched inputs are rejected") {
  const LabelVolume a = random_labels(make_grid(4, 4, 4), mmwhs_class_map(), 12);
  const LabelVolume b = random_labels(make_grid(5, 4, 4), mmwhs_class_map(), 13);
  CHECK_THROWS_AS(confusion(a, b, 1), DataError);
  const LabelVolume c = random_labels(make_grid(4, 4, 4), ClassMap{0, 205}, 14);
  CHECK_THROWS_AS(evaluate(a, c), DataError);
}

TEST_CASE("full evaluation reports per-class scores and foreground means") {
  const LabelVolume pred = random_labels(make_grid(6, 6, 6), mmwhs_class_map(), 15);
  const LabelVolume gt = random_labels(make_grid(6, 6, 6), mmwhs_class_map(), 16);
  const EvalReport report = evaluate(pred, gt, "mvf");

  CHECK(report.method == "mvf");
  REQUIRE(report.volume.size() == 8);
  REQUIRE(report.slice.size() == 8);

  MetricSummary expected;
  for (int k = 0; k < 8; ++k) {
    const ConfusionCounts c = confusion(pred, gt, k);
    CHECK(report.volume[static_cast<std::size_t>(k)].dsc == dsc(c));
    CHECK(report.volume[static_cast<std::size_t>(k)].voe == voe(c));
    CHECK(report.volume[static_cast<std::size_t>(k)].sn == sn(c));
    CHECK(report.volume[static_cast<std::size_t>(k)].iou == iou(c));
    CHECK(report.volume[static_cast<std::size_t>(k)].raw_code == mmwhs_class_map()[static_cast<std::size_t>(k)]);
    if (k >= 1) {
      expected.dsc += dsc(c);
      expected.voe += voe(c);
      expected.sn += sn(c);
      expected.iou += iou(c);
    }
  }
  CHECK(report.volume_mean.dsc == doctest::Approx(expected.dsc / 7.0).epsilon(1e-12));
  CHECK(report.volume_mean.voe == doctest::Approx(expected.voe / 7.0).epsilon(1e-12));
  CHECK(report.volume_mean.sn == doctest::Approx(expected.sn / 7.0).epsilon(1e-12));
  CHECK(report.volume_mean.iou == doctest::Approx(expected.iou / 7.0).epsilon(1e-12));

  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j.at("method") == "mvf");
  CHECK(j.at("volume").at("per_class").size() == 8);
  CHECK(j.at("volume").at("mean").at("dsc").get<double>() ==
        doctest::Approx(report.volume_mean.dsc));
  CHECK(j.at("slice").at("per_class").size() == 8);
}

TEST_CASE("a self-evaluation is perfect across the board") {
  const LabelVolume gt = random_labels(make_grid(5, 5, 5), mmwhs_class_map(), 17);
  const EvalReport report = evaluate(gt, gt);
  CHECK(report.volume_mean.dsc == 1.0);
  CHECK(report.volume_mean.voe == 0.0);
  CHECK(report.volume_mean.sn == 1.0);
  CHECK(report.volume_mean.iou == 1.0);
  CHECK(report.slice_mean.dsc == 1.0);
}
