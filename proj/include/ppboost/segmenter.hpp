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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ppboost/manifest.hpp"
#include "ppboost/rng.hpp"
#include "ppboost/types.hpp"

// Box prompt -> dense mask. The mock backend is a GT-aware oracle for desk
// runs; the external backend talks to any promptable model through an
// exchange directory:
//
//   toolkit writes   requests.jsonl  {sample_id, image_ref, x, y, w, h}
//   runner writes    <sample_id>_prob.npy  (H x W f32 in [0, 1])
//                    errors.jsonl          (optional {sample_id, error})
//                    done.marker           (last, once the batch is done)
namespace ppboost::segmenter {

enum class Backend { kMock, kExternal };

Backend parse_backend(const std::string& s);
const char* to_string(Backend b);

struct SegmenterConfig {
  Backend backend = Backend::kMock;
  double tau_seg = 0.5;
  double mock_boundary_noise = 0.0;
  double mock_inside = 0.95;
  double mock_outside = 0.02;
  // External backend.
  double timeout_s = 600.0;
  double poll_initial_s = 0.05;
  double poll_max_s = 2.0;

  void validate() const;
};

// Probability map: mock_inside on GT pixels whose centers fall inside the
// (image-clamped) prompt, mock_outside elsewhere. With boundary noise b > 0,
// pixels within b px of the region's edge flip with probability 1/2.
GridMap mock_segment(const Mask& gt_mask, const BBox& prompt, const SegmenterConfig& cfg,
                     RngSeed seed = {});

// M = 1{P > tau_seg}.
Mask binarize_probabilities(const GridMap& prob, double tau_seg);

struct SegmentRequest {
  SampleRecord record;
  BBox box;
};

struct SegmentOutcome {
  std::string sample_id;
  std::optional<Mask> mask;
  std::string error;  // empty on success
};

// Runs one batch through the exchange directory. Per-sample failures are
// reported in the outcome; the batch itself only throws on I/O errors.
std::vector<SegmentOutcome> external_segment(const std::vector<SegmentRequest>& batch,
                                             const std::filesystem::path& exchange_dir,
                                             const SegmenterConfig& cfg);

std::string encode_requests(const std::vector<SegmentRequest>& batch);

// image_ref written for a record: image_path, else features_path, else
// logits_path.
std::string image_ref(const SampleRecord& rec);

}  // namespace ppboost::segmenter
