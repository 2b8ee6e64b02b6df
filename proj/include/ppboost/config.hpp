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
#include <string>

#include <json.hpp>

#include "ppboost/boxgeom.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/detector.hpp"
#include "ppboost/metrics.hpp"
#include "ppboost/segmenter.hpp"
#include "ppboost/semisup.hpp"
#include "ppboost/synthgen.hpp"

// One JSON document configures every stage. Sections: data, confmap,
// filter, detector, semisup, expand, segment, metrics. Unknown keys are
// rejected so typos fail loudly.
namespace ppboost {

enum class ExtractMap { kHigh, kLow };

struct DataConfig {
  std::string manifest;  // empty: use the synthetic generator output
  std::string out_dir = "ppboost_run";
  synth::SynthConfig synthetic;
};

struct Ablation {
  bool filter = true;
  bool detector = true;
  bool expand = true;
};

struct PipelineConfig {
  DataConfig data;
  confmap::ConfMapConfig confmap;
  boxgeom::ExtractConfig extract;
  ExtractMap extract_map = ExtractMap::kHigh;
  confmap::FilterConfig filter;
  detector::DetectorConfig detector;
  detector::TrainConfig train;
  semisup::SemiSupConfig semisup;
  bool infer_with_teacher = true;
  boxgeom::ExpansionConfig expand;
  segmenter::SegmenterConfig segment;
  std::string exchange_dir = "exchange";
  metrics::NsdConfig nsd;
  Ablation ablation;

  void validate() const;
};

// Desk-scale defaults.
PipelineConfig default_config();
// Longer 10000-iteration schedule.
PipelineConfig full_preset();
PipelineConfig preset(const std::string& name);

// Applies `doc` on top of `base`.
PipelineConfig config_from_json(const nlohmann::json& doc,
                                PipelineConfig base = default_config());
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path,
                           PipelineConfig base = default_config());

synth::SynthConfig synth_from_json(const nlohmann::json& j, synth::SynthConfig base = {});
nlohmann::json synth_to_json(const synth::SynthConfig& s);

// sha256 of the canonical config JSON.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace ppboost
