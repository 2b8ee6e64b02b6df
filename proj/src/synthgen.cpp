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

#include "ppboost/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ppboost/boxgeom.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/error.hpp"
#include "ppboost/manifest.hpp"
#include "ppboost/npy.hpp"
#include "ppboost/parallel.hpp"
#include "ppboost/rng.hpp"

namespace ppboost::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxAspectLog = 0.4;
constexpr double kMaxSideFraction = 0.95;
constexpr double kDistractorFeature = -0.7;

struct Shape {
  ShapeKind kind;
  double cx, cy, a, b;  // center and half extents, px
  std::array<double, 3> amp{0, 0, 0};
  std::array<double, 3> phase{0, 0, 0};

  bool contains(double x, double y) const {
    const double u = (x - cx) / a;
    const double v = (y - cy) / b;
    switch (kind) {
      case ShapeKind::kRectangle:
        return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
      case ShapeKind::kEllipse:
        return u * u + v * v <= 1.0;
      case ShapeKind::kBlob: {
        const double rho = std::sqrt(u * u + v * v);
        const double th = std::atan2(v, u);
        double wobble = 1.0, norm = 1.0;
        for (int k = 0; k < 3; ++k) {
          wobble += amp[k] * std::cos((k + 2) * th + phase[k]);
          norm += amp[k];
        }
        return rho <= wobble / norm;
      }
    }
    return false;
  }
};

Mask rasterize(const Shape& s, std::size_t h, std::size_t w) {
  Mask m(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (s.contains(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5)) m.at(r, c) = 1;
    }
  }
  return m;
}

// Side fractions (of W and H) for an object of the given area fraction.
std::pair<double, double> side_fractions(ShapeKind kind, double area, double aspect) {
  const double k = kind == ShapeKind::kRectangle ? 1.0 : 4.0 / kPi;
  return {std::min(kMaxSideFraction, std::sqrt(area * k * aspect)),
          std::min(kMaxSideFraction, std::sqrt(area * k / aspect))};
}

std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn_%05zu", index);
  return buf;
}

std::string prompt_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "prompt_%02zu", index);
  return buf;
}

}  // namespace

ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "ellipse") return ShapeKind::kEllipse;
  if (s == "rectangle") return ShapeKind::kRectangle;
  if (s == "blob") return ShapeKind::kBlob;
  throw ConfigError("unknown shape_kind '" + s + "' (ellipse, rectangle, blob)");
}

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kBlob: return "blob";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (image_h == 0 || image_w == 0) throw ConfigError("synth image size must be positive");
  if (grid.rows == 0 || grid.cols == 0 || grid.channels != 1) {
    throw ConfigError("synth grid must be rows x cols x 1 with positive sides");
  }
  if (grid.rows > image_h || grid.cols > image_w) {
    throw ConfigError("synth grid is finer than the image");
  }
  if (!(size_range[0] > 0.0 && size_range[0] <= size_range[1] && size_range[1] <= 1.0)) {
    throw ConfigError("synth size_range must satisfy 0 < lo <= hi <= 1");
  }
  // Smallest possible object must still span a pixel on each side.
  const auto [fw, fh] =
      side_fractions(shape_kind, size_range[0], std::exp(-kMaxAspectLog));
  const auto [gw, gh] = side_fractions(shape_kind, size_range[0], std::exp(kMaxAspectLog));
  if (std::min(fw, gw) * static_cast<double>(image_w) < 2.0 ||
      std::min(fh, gh) * static_cast<double>(image_h) < 2.0) {
    throw ConfigError("synth size_range lower bound is below one pixel for this image");
  }
  if (!(noise_sigma_range[0] >= 0.0 && noise_sigma_range[0] <= noise_sigma_range[1])) {
    throw ConfigError("synth noise_sigma_range must satisfy 0 <= lo <= hi");
  }
  if (!(distractor_prob >= 0.0 && distractor_prob <= 1.0)) {
    throw ConfigError("synth distractor_prob must be in [0, 1]");
  }
  if (!(activation_shrink >= 0.0)) throw ConfigError("synth activation_shrink must be >= 0");
  if (!(min_coverage > 0.0 && min_coverage <= 1.0)) {
    throw ConfigError("synth min_coverage must be in (0, 1]");
  }
  if (!(feature_noise >= 0.0)) throw ConfigError("synth feature_noise must be >= 0");
  if (!(infer_fraction >= 0.0 && infer_fraction <= 1.0)) {
    throw ConfigError("synth infer_fraction must be in [0, 1]");
  }
  if (prompt_pool == 0) throw ConfigError("synth prompt_pool must be >= 1");
}

GridMap occupancy(const Mask& mask, std::size_t rows, std::size_t cols) {
  GridMap occ({rows, cols, 1});
  std::vector<double> counts(rows * cols, 0.0);
  const std::size_t h = mask.height(), w = mask.width();
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t gr = r * rows / h;
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t gc = c * cols / w;
      counts[gr * cols + gc] += 1.0;
      occ.at(gr, gc) += mask.at(r, c);
    }
  }
  auto v = occ.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= counts[i];
  return occ;
}

SynthSample generate_sample(const SynthConfig& cfg, std::size_t index, Split split_kind,
                            const std::string& prompt_id) {
  Rng rng(split(cfg.seed, index));
  const double W = static_cast<double>(cfg.image_w);
  const double H = static_cast<double>(cfg.image_h);

  const double sigma = rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]);
  const double area = rng.uniform(cfg.size_range[0], cfg.size_range[1]);
  const double aspect = std::exp(rng.uniform(-kMaxAspectLog, kMaxAspectLog));
  const auto [fw, fh] = side_fractions(cfg.shape_kind, area, aspect);

  Shape obj{cfg.shape_kind, 0, 0, 0.5 * fw * W, 0.5 * fh * H};
  obj.cx = rng.uniform(obj.a, W - obj.a);
  obj.cy = rng.uniform(obj.b, H - obj.b);
  for (int k = 0; k < 3; ++k) {
    obj.amp[k] = rng.uniform(0.0, 0.15);
    obj.phase[k] = rng.uniform(0.0, 2.0 * kPi);
  }

  SynthSample out;
  out.gt_mask = rasterize(obj, cfg.image_h, cfg.image_w);
  if (out.gt_mask.count() == 0) {
    throw ConfigError("synth sample " + std::to_string(index) + " has an empty object");
  }
  out.gt_box = boxgeom::tight_box(out.gt_mask);

  // Activated core: scaled copy of the object, displaced but kept inside it.
  out.coverage = std::max(cfg.min_coverage, 1.0 - cfg.activation_shrink * sigma);
  Shape core = obj;
  core.a *= out.coverage;
  core.b *= out.coverage;
  core.cx += rng.uniform(-1.0, 1.0) * (1.0 - out.coverage) * obj.a;
  core.cy += rng.uniform(-1.0, 1.0) * (1.0 - out.coverage) * obj.b;
  Mask active = rasterize(core, cfg.image_h, cfg.image_w);
  for (std::size_t i = 0; i < active.bits().size(); ++i) {
    active.bits()[i] &= out.gt_mask.bits()[i];
  }
  if (active.count() == 0) active = out.gt_mask;

  // Optional distractor blob that never touches the object's box.
  Mask distractor(cfg.image_h, cfg.image_w);
  const bool want_distractor = rng.bernoulli(cfg.distractor_prob);
  if (want_distractor) {
    const double darea = rng.uniform(0.02, 0.06);
    const auto [dw, dh] = side_fractions(ShapeKind::kEllipse, darea, 1.0);
    Shape d{ShapeKind::kEllipse, 0, 0, 0.5 * dw * W, 0.5 * dh * H};
    for (int attempt = 0; attempt < 20; ++attempt) {
      d.cx = rng.uniform(d.a, W - d.a);
      d.cy = rng.uniform(d.b, H - d.b);
      const BBox db{d.cx - d.a, d.cy - d.b, 2 * d.a, 2 * d.b};
      if (boxgeom::iou(db, out.gt_box) == 0.0) {
        distractor = rasterize(d, cfg.image_h, cfg.image_w);
        break;
      }
    }
  }

  const GridMap occ_gt = occupancy(out.gt_mask, cfg.grid.rows, cfg.grid.cols);
  const GridMap occ_act = occupancy(active, cfg.grid.rows, cfg.grid.cols);
  const GridMap occ_dis = occupancy(distractor, cfg.grid.rows, cfg.grid.cols);

  out.logits = GridMap(cfg.grid);
  out.features = GridMap(cfg.grid);
  const double gain = cfg.signal - cfg.background_logit;
  for (std::size_t i = 0; i < out.logits.size(); ++i) {
    const double a = std::max(occ_act.values()[i], occ_dis.values()[i]);
    out.logits.values()[i] = cfg.background_logit + gain * a + rng.normal(0.0, sigma);
  }
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    out.features.values()[i] = cfg.feature_contrast * occ_gt.values()[i] +
                               kDistractorFeature * occ_dis.values()[i] +
                               rng.normal(0.0, cfg.feature_noise);
  }

  auto& rec = out.record;
  rec.sample_id = sample_name(index);
  rec.image_h = cfg.image_h;
  rec.image_w = cfg.image_w;
  rec.grid = cfg.grid;
  rec.logits_path = "logits/" + rec.sample_id + ".npy";
  rec.features_path = "features/" + rec.sample_id + ".npy";
  rec.gt_mask_path = "masks/" + rec.sample_id + ".npy";
  rec.prompt_id = prompt_id;
  rec.split = split_kind;
  rec.noise_sigma = sigma;
  return out;
}

std::filesystem::path generate(const SynthConfig& cfg, const std::filesystem::path& out_dir,
                               std::size_t jobs) {
  cfg.validate();
  const std::size_t n = cfg.n_samples;

  // Split and prompt assignment come from their own stream so they do not
  // depend on per-sample draws.
  Rng assign(split(cfg.seed, "assign"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), assign.engine());
  std::vector<Split> splits(n, Split::kTrain);
  const std::size_t n_infer = confmap::ceil_count(cfg.infer_fraction, n);
  for (std::size_t i = 0; i < n_infer; ++i) splits[order[i]] = Split::kInfer;
  std::vector<std::string> prompts(n);
  for (std::size_t i = 0; i < n; ++i) prompts[i] = prompt_name(assign.below(cfg.prompt_pool));

  std::vector<SampleRecord> records(n);
  std::vector<BoxRecord> boxes(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    SynthSample s = generate_sample(cfg, i, splits[i], prompts[i]);
    npy::write_grid(out_dir / s.record.logits_path, s.logits);
    npy::write_grid(out_dir / *s.record.features_path, s.features);
    npy::write_mask(out_dir / *s.record.gt_mask_path, s.gt_mask);
    boxes[i] = {s.record.sample_id, s.gt_box, std::nullopt};
    records[i] = std::move(s.record);
  });

  std::filesystem::create_directories(out_dir);
  write_boxes(out_dir / "gt_boxes.jsonl", boxes);
  const auto manifest = out_dir / "manifest.json";
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace ppboost::synth
