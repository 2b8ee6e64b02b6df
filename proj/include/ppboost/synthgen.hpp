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

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>

#include "ppboost/types.hpp"

// Seeded synthetic benchmark: latent GT masks, noisy logit grids and a
// separate image feature grid per sample, plus the manifest binding them.
//
// Logits are background_logit + (signal - background_logit) * occupancy of
// the activated region + N(0, sigma_i^2). The activated region is the GT
// shape scaled by c_i = max(min_coverage, 1 - activation_shrink * sigma_i)
// about a point displaced inside the object, so noisier samples respond to
// a smaller part of the object. With background_logit = 0 and
// activation_shrink = 0 the logits are exactly signal * occupancy + noise.
namespace ppboost::synth {

enum class ShapeKind { kEllipse, kRectangle, kBlob };

ShapeKind parse_shape_kind(const std::string& s);
const char* to_string(ShapeKind k);

struct SynthConfig {
  std::size_t n_samples = 200;
  std::size_t image_h = 128;
  std::size_t image_w = 128;
  GridShape grid{32, 32, 1};
  ShapeKind shape_kind = ShapeKind::kEllipse;
  // Object area as a fraction of the image.
  std::array<double, 2> size_range{0.05, 0.6};
  double signal = 3.0;
  std::array<double, 2> noise_sigma_range{0.0, 2.0};
  double distractor_prob = 0.2;
  double background_logit = -8.0;
  double activation_shrink = 0.25;
  double min_coverage = 0.3;
  // Image features the detector sees.
  double feature_contrast = 1.0;
  double feature_noise = 0.1;
  double infer_fraction = 0.3;
  std::size_t prompt_pool = 20;
  RngSeed seed{0};

  void validate() const;
};

// Everything generated for one sample, before it is written out.
struct SynthSample {
  SampleRecord record;
  Mask gt_mask;
  BBox gt_box;
  GridMap logits;
  GridMap features;
  double coverage = 1.0;
};

// Deterministic in (cfg, index); independent of generation order.
SynthSample generate_sample(const SynthConfig& cfg, std::size_t index, Split split,
                            const std::string& prompt_id);

// Writes logits/, features/, masks/, gt_boxes.jsonl and manifest.json under
// out_dir and returns the manifest path.
std::filesystem::path generate(const SynthConfig& cfg, const std::filesystem::path& out_dir,
                               std::size_t jobs = 1);

// Fraction of cells of each cell-sized block covered by the mask.
GridMap occupancy(const Mask& mask, std::size_t rows, std::size_t cols);

}  // namespace ppboost::synth
