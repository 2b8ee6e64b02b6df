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

#include <json.hpp>

#include "ppboost/types.hpp"

namespace ppboost {

// A manifest plus the root its relative paths resolve against.
struct Dataset {
  std::filesystem::path root;
  std::vector<SampleRecord> samples;

  std::filesystem::path path_of(const std::string& rel) const;
  const SampleRecord* find(const std::string& sample_id) const;
  std::vector<SampleRecord> with_split(Split split) const;
};

struct ManifestOptions {
  // Check that referenced files exist under the root.
  bool check_files = true;
  // Defaults to PPBOOST_ROOT, then the manifest's directory.
  std::optional<std::filesystem::path> root;
};

// Validates every record; all problems are reported together, each line
// naming the offending sample id.
std::vector<SampleRecord> parse_manifest(const nlohmann::json& doc,
                                         const std::filesystem::path& root,
                                         bool check_files);

Dataset read_manifest(const std::filesystem::path& path,
                      const ManifestOptions& opts = {});

nlohmann::json manifest_to_json(const std::vector<SampleRecord>& samples);
std::string encode_manifest(const std::vector<SampleRecord>& samples);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<SampleRecord>& samples);

// One line of a pseudo-box or detection JSONL file.
struct BoxRecord {
  std::string sample_id;
  BBox box;
  std::optional<double> score;
};

std::vector<BoxRecord> parse_boxes(const std::string& text,
                                   const std::string& origin);
std::vector<BoxRecord> read_boxes(const std::filesystem::path& path);
std::string encode_boxes(const std::vector<BoxRecord>& boxes);
void write_boxes(const std::filesystem::path& path,
                 const std::vector<BoxRecord>& boxes);

// Canonical JSON text used for every JSON artifact: two-space indent and a
// trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace ppboost
