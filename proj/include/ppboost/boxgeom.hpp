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
#include <span>
#include <vector>

#include "ppboost/types.hpp"

namespace ppboost::boxgeom {

enum class Upsample { kBilinear, kNearest };

struct ExtractConfig {
  double binarize_threshold = 0.5;
  Upsample upsample = Upsample::kBilinear;

  void validate() const;
};

enum class PhiMode { kMedian, kFixed };

struct ExpansionConfig {
  double ratio = 0.1;
  PhiMode phi_mode = PhiMode::kMedian;
  double phi = 0.5;  // used when phi_mode == kFixed
  bool clamp_to_image = true;

  void validate() const;
};

// Resamples a 1-channel grid to image resolution using half-pixel centers:
// src = (dst + 0.5) * (grid / image) - 0.5, clamped at the edges. Nearest
// picks the cell that contains the destination pixel center.
GridMap upsample_map(const GridMap& map, std::size_t image_h, std::size_t image_w,
                     Upsample mode);

// 1 where value > threshold.
Mask binarize(const GridMap& map, double threshold);

// Tight inclusive-extent box over all foreground pixels. Throws
// EmptyForeground when the mask is empty.
BBox tight_box(const Mask& mask);

// Binarizes an image-resolution map and returns its tight box.
BBox extract_pseudo_bbox(const GridMap& map, const ExtractConfig& cfg);

// Upsamples a grid-resolution confidence map, then extracts.
BBox extract_from_grid(const GridMap& grid_map, std::size_t image_h,
                       std::size_t image_w, const ExtractConfig& cfg);

double iou(const BBox& a, const BBox& b);

// NMS visit order: higher score first, then larger area.
bool ranks_before(const Detection& a, const Detection& b);

// Greedy suppression. Candidates are visited by descending score, then
// larger area, then input order; a candidate survives iff its IoU with
// every survivor is <= iou_threshold. Output is in visit order.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

// Lower median (element (n-1)/2 of the sorted scores).
double median_score(std::span<const double> scores);

// Expands (x - r/2 w, y - r/2 h, (1+r) w, (1+r) h).
BBox expand_box(const BBox& b, double ratio);

// Intersection with [0, W] x [0, H]. May return a non-positive size when
// the box lies entirely outside the image.
BBox clamp_box(const BBox& b, std::size_t image_h, std::size_t image_w);

// Leaves boxes with score > phi unchanged and expands the rest.
BBox selective_expand_one(const Detection& det, const ExpansionConfig& cfg, double phi,
                          std::size_t image_h, std::size_t image_w);

// Resolves phi (median over `dets` in median mode) and expands each box.
std::vector<BBox> selective_expand(const std::vector<Detection>& dets,
                                   const ExpansionConfig& cfg, std::size_t image_h,
                                   std::size_t image_w);

double resolve_phi(std::span<const double> scores, const ExpansionConfig& cfg);

// Center-preserving scale of both sides by (1 + signed_ratio).
BBox perturb_box(const BBox& b, double signed_ratio);

// True when the pixel center (c + 0.5, r + 0.5) lies in [x, x+w) x [y, y+h).
inline bool covers_pixel_center(const BBox& b, std::size_t r, std::size_t c) {
  const double px = static_cast<double>(c) + 0.5;
  const double py = static_cast<double>(r) + 0.5;
  return px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h;
}

}  // namespace ppboost::boxgeom
