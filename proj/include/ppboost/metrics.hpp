/* Copyright 2026 The PPBoost Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ppboost/types.hpp"

namespace ppboost::metrics {

struct NsdConfig {
  double tolerance_px = 2.0;

  void validate() const;
};

// 2|A & B| / (|A| + |B|); 1 when both are empty.
double dice(const Mask& a, const Mask& b);

// Foreground pixels with a 4-neighbour in the background or on the image edge.
Mask boundary(const Mask& m);

// Squared Euclidean distance from every pixel center to the nearest set
// pixel of `features` (infinity when there is none). Exact, separable.
std::vector<double> squared_distance_transform(const Mask& features);

// Symmetric fraction of boundary pixels lying within tolerance of the other
// mask's boundary. 1 when both masks are empty, 0 when exactly one is.
double nsd(const Mask& a, const Mask& b, const NsdConfig& cfg);

struct ScoredBox {
  std::string sample_id;
  Detection det;
};

struct GroundTruth {
  std::string sample_id;
  BBox box;
};

struct ApResult {
  std::vector<double> thresholds;
  std::vector<double> ap;  // one per threshold
  double map = 0.0;

  // AP at the threshold closest to t (exact match required within 1e-9).
  std::optional<double> at(double t) const;
};

// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

// Single-class AP with greedy matching in descending score order
// (ties: ascending sample_id, then input order) and all-points
// interpolation of the precision envelope.
ApResult average_precision(const std::vector<ScoredBox>& dets,
                           const std::vector<GroundTruth>& gts,
                           const std::vector<double>& iou_thresholds);

struct SampleMetrics {
  std::string sample_id;
  double dice = 0.0;
  double nsd = 0.0;
};

struct DetectionSummary {
  double map = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
};

struct EvalReport {
  std::vector<SampleMetrics> per_sample;  // sorted by sample_id
  double mdsc = 0.0;
  double mnsd = 0.0;
  std::optional<DetectionSummary> detection;
  double nsd_tolerance_px = 2.0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();
};

// Sorts rows by sample_id and fills the means in that order.
EvalReport make_report(std::vector<SampleMetrics> rows, const NsdConfig& nsd_cfg);

nlohmann::json report_to_json(const EvalReport& r);
std::string report_csv(const EvalReport& r);
// Histogram of per-sample Dice and NSD as a standalone SVG document.
std::string report_svg(const EvalReport& r);

}  // namespace ppboost::metrics
