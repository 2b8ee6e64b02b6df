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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppboost/detector.hpp"
#include "ppboost/rng.hpp"
#include "ppboost/types.hpp"

// Teacher-student training: supervised burn-in, then the student learns
// from labeled data plus teacher pseudo-labels on unlabeled data while the
// teacher tracks the student by EMA.
namespace ppboost::semisup {

struct AugConfig {
  double hflip_p = 0.5;
  // Strong view only.
  double noise_sigma = 0.1;
  double dropout_p = 0.1;

  void validate() const;
};

struct SemiSupConfig {
  double labeled_fraction = 0.10;
  int burn_in_iters = 800;
  double unsup_weight = 1.5;
  double ema_decay = 0.9996;
  double pl_score_min = 0.7;
  double pl_nms_iou = 0.7;
  int batch_labeled = 32;
  int batch_unlabeled = 32;
  AugConfig aug;
  RngSeed seed{0};

  void validate() const;
};

// Raw detector input for one image plus its (pseudo-)boxes.
struct TrainImage {
  std::string sample_id;
  GridMap raw;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::vector<BBox> boxes;
};

struct LabeledPair {
  SampleRecord record;
  BBox box;
};

struct DatasetSplit {
  std::vector<LabeledPair> labeled;
  std::vector<SampleRecord> unlabeled;
};

// Labels a seeded ceil(fraction * |kept|) subset of the kept pairs; every
// other sample in all_samples becomes unlabeled. Order follows the inputs.
DatasetSplit split_dataset(const std::vector<LabeledPair>& kept,
                           const std::vector<SampleRecord>& all_samples, double fraction,
                           RngSeed seed);

// forward -> NMS -> keep score >= pl_score_min. `input` is the stem output.
std::vector<BBox> teacher_pseudo_labels(const GridMap& input,
                                        const detector::DetectorParams& teacher,
                                        const detector::AnchorGrid& anchors,
                                        const SemiSupConfig& cfg);

// alpha * teacher + (1 - alpha) * student.
detector::DetectorParams ema_update(const detector::DetectorParams& teacher,
                                    const detector::DetectorParams& student, double alpha);

// Mirror a grid left-right, and a box inside an image of width W.
GridMap flip_grid(const GridMap& g);
BBox flip_box(const BBox& b, std::size_t image_w);

struct AugDraw {
  bool flip = false;
  std::uint64_t noise_seed = 0;
};

// Weak view: optional flip. Strong view: same flip, then additive noise
// and cell dropout drawn from noise_seed.
GridMap weak_view(const GridMap& raw, const AugDraw& d);
GridMap strong_view(const GridMap& raw, const AugDraw& d, const AugConfig& cfg);

struct LogEntry {
  int iter = 0;
  double l_sup = 0.0;
  double l_unsup = 0.0;
  std::size_t n_pseudo = 0;
};

struct TrainResult {
  detector::DetectorParams student;
  detector::DetectorParams teacher;
  std::vector<LogEntry> log;
};

// Called after every iteration; used by the CLI to stream the log.
using LogSink = std::function<void(const LogEntry&)>;

TrainResult train_semisup(const std::vector<TrainImage>& labeled,
                          const std::vector<TrainImage>& unlabeled,
                          const detector::DetectorConfig& dcfg, const SemiSupConfig& cfg,
                          const detector::TrainConfig& tcfg, std::size_t jobs = 1,
                          const LogSink& sink = {});

std::string encode_log(const std::vector<LogEntry>& log);

// Top-scoring detection per image (nullopt when nothing clears min_score).
std::vector<std::optional<Detection>> predict_top1(const std::vector<TrainImage>& images,
                                                   const detector::DetectorParams& params,
                                                   const detector::DetectorConfig& dcfg,
                                                   std::size_t jobs = 1);

}  // namespace ppboost::semisup
