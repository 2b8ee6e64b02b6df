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

#include "ppboost/boxgeom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppboost/error.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::boxgeom {

void ExtractConfig::validate() const {
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw ConfigError("extract.binarize_threshold must be in (0, 1)");
  }
}

void ExpansionConfig::validate() const {
  if (!(ratio >= 0.0)) throw ConfigError("expand.ratio must be >= 0");
}

namespace {

struct Sample1d {
  std::size_t i0;
  std::size_t i1;
  double t;
};

// Half-pixel-center source coordinates for one axis.
std::vector<Sample1d> bilinear_axis(std::size_t src_n, std::size_t dst_n) {
  std::vector<Sample1d> out(dst_n);
  const double scale = static_cast<double>(src_n) / static_cast<double>(dst_n);
  const double hi = static_cast<double>(src_n - 1);
  for (std::size_t d = 0; d < dst_n; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, hi);
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src_n - 1);
    out[d] = {i0, i1, s - static_cast<double>(i0)};
  }
  return out;
}

std::vector<std::size_t> nearest_axis(std::size_t src_n, std::size_t dst_n) {
  std::vector<std::size_t> out(dst_n);
  const double scale = static_cast<double>(src_n) / static_cast<double>(dst_n);
  for (std::size_t d = 0; d < dst_n; ++d) {
    const auto i = static_cast<std::size_t>(std::floor((static_cast<double>(d) + 0.5) * scale));
    out[d] = std::min(i, src_n - 1);
  }
  return out;
}

// a + t (b - a) keeps constant regions exact.
inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

GridMap upsample_map(const GridMap& map, std::size_t image_h, std::size_t image_w,
                     Upsample mode) {
  if (map.channels() != 1) throw ShapeError("upsample_map expects a 1-channel grid");
  if (image_h == 0 || image_w == 0) throw ShapeError("upsample target must be positive");
  GridMap out({image_h, image_w, 1});
  if (mode == Upsample::kNearest) {
    const auto ry = nearest_axis(map.rows(), image_h);
    const auto rx = nearest_axis(map.cols(), image_w);
    for (std::size_t y = 0; y < image_h; ++y) {
      for (std::size_t x = 0; x < image_w; ++x) out.at(y, x) = map.at(ry[y], rx[x]);
    }
    return out;
  }
  const auto sy = bilinear_axis(map.rows(), image_h);
  const auto sx = bilinear_axis(map.cols(), image_w);
  for (std::size_t y = 0; y < image_h; ++y) {
    const auto& a = sy[y];
    for (std::size_t x = 0; x < image_w; ++x) {
      const auto& b = sx[x];
      const double top = lerp(map.at(a.i0, b.i0), map.at(a.i0, b.i1), b.t);
      const double bot = lerp(map.at(a.i1, b.i0), map.at(a.i1, b.i1), b.t);
      out.at(y, x) = lerp(top, bot, a.t);
    }
  }
  return out;
}

Mask binarize(const GridMap& map, double threshold) {
  if (map.channels() != 1) throw ShapeError("binarize expects a 1-channel map");
  Mask m(map.rows(), map.cols());
  simd::kernels().threshold_gt(map.values().data(), threshold, m.bits().data(),
                               map.size());
  return m;
}

BBox tight_box(const Mask& mask) {
  std::size_t r0 = mask.height(), r1 = 0, c0 = mask.width(), c1 = 0;
  bool any = false;
  for (std::size_t r = 0; r < mask.height(); ++r) {
    const std::uint8_t* row = mask.bits().data() + r * mask.width();
    for (std::size_t c = 0; c < mask.width(); ++c) {
      if (!row[c]) continue;
      any = true;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (!any) throw EmptyForeground("no foreground pixel above threshold");
  return {static_cast<double>(c0), static_cast<double>(r0),
          static_cast<double>(c1 - c0 + 1), static_cast<double>(r1 - r0 + 1)};
}

BBox extract_pseudo_bbox(const GridMap& map, const ExtractConfig& cfg) {
  cfg.validate();
  return tight_box(binarize(map, cfg.binarize_threshold));
}

BBox extract_from_grid(const GridMap& grid_map, std::size_t image_h, std::size_t image_w,
                       const ExtractConfig& cfg) {
  return extract_pseudo_bbox(upsample_map(grid_map, image_h, image_w, cfg.upsample), cfg);
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.box.area() > b.box.area();
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(dets[a], dets[b]);
  });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const auto& d = dets[idx];
    const bool survives = std::all_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(d.box, k.box) <= iou_threshold;
    });
    if (survives) kept.push_back(d);
  }
  return kept;
}

double median_score(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("median of an empty score set is undefined");
  std::vector<double> s(scores.begin(), scores.end());
  const std::size_t mid = (s.size() - 1) / 2;
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid), s.end());
  return s[mid];
}

BBox expand_box(const BBox& b, double ratio) {
  return {b.x - 0.5 * ratio * b.w, b.y - 0.5 * ratio * b.h, (1.0 + ratio) * b.w,
          (1.0 + ratio) * b.h};
}

BBox clamp_box(const BBox& b, std::size_t image_h, std::size_t image_w) {
  const double x0 = std::max(b.x, 0.0);
  const double y0 = std::max(b.y, 0.0);
  const double x1 = std::min(b.right(), static_cast<double>(image_w));
  const double y1 = std::min(b.bottom(), static_cast<double>(image_h));
  return {x0, y0, x1 - x0, y1 - y0};
}

BBox selective_expand_one(const Detection& det, const ExpansionConfig& cfg, double phi,
                          std::size_t image_h, std::size_t image_w) {
  BBox out = det.score > phi ? det.box : expand_box(det.box, cfg.ratio);
  if (cfg.clamp_to_image) out = clamp_box(out, image_h, image_w);
  return out;
}

double resolve_phi(std::span<const double> scores, const ExpansionConfig& cfg) {
  return cfg.phi_mode == PhiMode::kFixed ? cfg.phi : median_score(scores);
}

std::vector<BBox> selective_expand(const std::vector<Detection>& dets,
                                   const ExpansionConfig& cfg, std::size_t image_h,
                                   std::size_t image_w) {
  cfg.validate();
  std::vector<BBox> out;
  if (dets.empty()) return out;
  std::vector<double> scores;
  scores.reserve(dets.size());
  for (const auto& d : dets) scores.push_back(d.score);
  const double phi = resolve_phi(scores, cfg);
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back(selective_expand_one(d, cfg, phi, image_h, image_w));
  return out;
}

BBox perturb_box(const BBox& b, double signed_ratio) {
  if (!(signed_ratio > -1.0)) {
    throw ValidationError("perturb ratio must be > -1, got " + std::to_string(signed_ratio));
  }
  return expand_box(b, signed_ratio);
}

}  // namespace ppboost::boxgeom
