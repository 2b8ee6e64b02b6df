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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppboost/config.hpp"
#include "ppboost/manifest.hpp"
#include "ppboost/metrics.hpp"
#include "ppboost/semisup.hpp"

// Stage functions shared by the CLI subcommands and the end-to-end run.
namespace ppboost::pipeline {

// Detector input grid: features_path when present, otherwise the logits.
GridMap detector_input(const Dataset& ds, const SampleRecord& rec);

// The sigmoid map boxes are extracted from (high temperature by default).
GridMap extraction_map(const GridMap& logits, const PipelineConfig& cfg);

struct ExtractResult {
  std::vector<BoxRecord> boxes;      // in sample order, skipping empties
  std::vector<std::string> empty;    // ids with no foreground
};

ExtractResult extract_boxes(const Dataset& ds, const std::vector<SampleRecord>& samples,
                            const PipelineConfig& cfg, std::size_t jobs = 1);

semisup::TrainImage train_image(const Dataset& ds, const SampleRecord& rec,
                                std::vector<BBox> boxes = {});

struct TrainOutcome {
  semisup::DatasetSplit split;
  semisup::TrainResult result;
};

// Splits pseudo-labeled samples into labeled/unlabeled and trains.
TrainOutcome train_detector(const Dataset& ds, const std::vector<SampleRecord>& train_samples,
                            const std::vector<BoxRecord>& pseudo, const PipelineConfig& cfg,
                            std::size_t jobs = 1, const semisup::LogSink& sink = {});

// Top-1 detection per sample; the full image with score 0 when nothing
// clears min_score.
std::vector<BoxRecord> detect(const Dataset& ds, const std::vector<SampleRecord>& samples,
                              const detector::DetectorParams& params, const PipelineConfig& cfg,
                              std::size_t jobs = 1);

// Selective expansion with phi resolved over the whole batch.
std::vector<BoxRecord> expand(const Dataset& ds, const std::vector<BoxRecord>& dets,
                              const boxgeom::ExpansionConfig& cfg);

struct SegmentResult {
  std::map<std::string, Mask> masks;
  std::map<std::string, std::string> errors;
};

SegmentResult segment(const Dataset& ds, const std::vector<BoxRecord>& prompts,
                      const PipelineConfig& cfg, std::size_t jobs = 1);

// Ground-truth box of a sample: tight box of its GT mask.
BBox gt_box(const Dataset& ds, const SampleRecord& rec);

// Dice/NSD against GT masks for every sample in `samples`; detection AP
// when `dets` is given. Throws ValidationError listing ids whose GT or
// predicted mask is missing.
metrics::EvalReport evaluate(const Dataset& ds, const std::vector<SampleRecord>& samples,
                             const std::map<std::string, Mask>& pred,
                             const std::vector<BoxRecord>* dets, const metrics::NsdConfig& nsd,
                             std::size_t jobs = 1);

struct PerturbRow {
  double ratio = 0.0;
  double mdsc = 0.0;
  double mnsd = 0.0;
};

// Mock-segments every sample from its GT box scaled by each ratio.
std::vector<PerturbRow> perturb_study(const Dataset& ds, const std::vector<SampleRecord>& samples,
                                      const std::vector<double>& ratios,
                                      const PipelineConfig& cfg, std::size_t jobs = 1);

struct RunResult {
  std::vector<confmap::StabilityScore> scores;
  ExtractResult pseudo;
  std::optional<TrainOutcome> training;
  std::vector<BoxRecord> detections;
  std::vector<BoxRecord> prompts;
  SegmentResult segmentation;
  metrics::EvalReport report;
};

// End-to-end run honouring cfg.ablation. Writes every artifact under
// out_dir when it is given.
RunResult run(const Dataset& ds, const PipelineConfig& cfg, std::size_t jobs = 1,
              const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Content digest over the manifest and every file it references.
std::string dataset_digest(const Dataset& ds);

// Provenance block shared by run manifests and reports.
nlohmann::json provenance(const PipelineConfig& cfg, const Dataset& ds);

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const PipelineConfig& cfg, const nlohmann::json& inputs,
                        const std::vector<std::string>& outputs);

}  // namespace ppboost::pipeline
