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

#include "ppboost/manifest.hpp"

#include <set>
#include <sstream>

#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"

namespace ppboost {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path Dataset::path_of(const std::string& rel) const {
  return fsutil::resolve(root, rel);
}

const SampleRecord* Dataset::find(const std::string& sample_id) const {
  for (const auto& s : samples) {
    if (s.sample_id == sample_id) return &s;
  }
  return nullptr;
}

std::vector<SampleRecord> Dataset::with_split(Split split) const {
  std::vector<SampleRecord> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

namespace {

std::size_t positive_int(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    throw ValidationError(std::string("field ") + key + " must be a positive integer");
  }
  return v.get<std::size_t>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ValidationError(std::string("field ") + key + " must be a string");
  }
  return it->get<std::string>();
}

SampleRecord parse_record(const json& j) {
  static const char* kRequired[] = {"sample_id", "image_h", "image_w", "grid",
                                    "logits_path", "prompt_id", "split"};
  for (const char* key : kRequired) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field ") + key);
  }
  SampleRecord r;
  if (!j["sample_id"].is_string() || j["sample_id"].get<std::string>().empty()) {
    throw ValidationError("field sample_id must be a nonempty string");
  }
  r.sample_id = j["sample_id"].get<std::string>();
  r.image_h = positive_int(j, "image_h");
  r.image_w = positive_int(j, "image_w");
  const json& g = j["grid"];
  if (!g.is_object()) throw ValidationError("field grid must be an object");
  for (const char* key : {"rows", "cols"}) {
    if (!g.contains(key)) throw ValidationError(std::string("missing field grid.") + key);
  }
  r.grid.rows = positive_int(g, "rows");
  r.grid.cols = positive_int(g, "cols");
  r.grid.channels = g.contains("channels") ? positive_int(g, "channels") : 1;
  if (!j["logits_path"].is_string()) throw ValidationError("field logits_path must be a string");
  r.logits_path = j["logits_path"].get<std::string>();
  if (!j["prompt_id"].is_string()) throw ValidationError("field prompt_id must be a string");
  r.prompt_id = j["prompt_id"].get<std::string>();
  if (!j["split"].is_string()) throw ValidationError("field split must be a string");
  r.split = parse_split(j["split"].get<std::string>());
  r.gt_mask_path = optional_string(j, "gt_mask_path");
  r.features_path = optional_string(j, "features_path");
  r.vlm_features_path = optional_string(j, "vlm_features_path");
  r.image_path = optional_string(j, "image_path");
  if (auto it = j.find("noise_sigma"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw ValidationError("field noise_sigma must be a number");
    r.noise_sigma = it->get<double>();
  }
  return r;
}

}  // namespace

std::vector<SampleRecord> parse_manifest(const json& doc, const fs::path& root,
                                         bool check_files) {
  if (!doc.is_array()) throw ValidationError("manifest must be a JSON array");
  std::vector<SampleRecord> out;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& j = doc[i];
    std::string label = "entry " + std::to_string(i);
    if (j.is_object() && j.contains("sample_id") && j["sample_id"].is_string()) {
      label = j["sample_id"].get<std::string>();
    }
    try {
      if (!j.is_object()) throw ValidationError("entry is not an object");
      SampleRecord r = parse_record(j);
      if (!seen.insert(r.sample_id).second) {
        throw ValidationError("duplicate sample_id");
      }
      if (check_files) {
        auto exists = [&](const std::string& rel) {
          return fs::exists(fsutil::resolve(root, rel));
        };
        const bool logits_ok =
            exists(r.logits_path) ||
            (r.vlm_features_path && exists(*r.vlm_features_path));
        if (!logits_ok) throw ValidationError("dangling path " + r.logits_path);
        for (const auto* opt : {&r.gt_mask_path, &r.features_path, &r.vlm_features_path}) {
          if (*opt && !exists(**opt)) throw ValidationError("dangling path " + **opt);
        }
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(label + ": " + e.what());
    } catch (const ValidationError& e) {
      problems.push_back(label + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid manifest (" << problems.size() << " problem"
        << (problems.size() == 1 ? "" : "s") << ")";
    for (const auto& p : problems) msg << "\n  " << p;
    throw ValidationError(msg.str());
  }
  return out;
}

Dataset read_manifest(const fs::path& path, const ManifestOptions& opts) {
  json doc;
  try {
    doc = json::parse(fsutil::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("cannot parse manifest '" + path.string() + "': " + e.what());
  }
  Dataset ds;
  ds.root = opts.root ? *opts.root
                      : fsutil::dataset_root(path.has_parent_path()
                                                 ? path.parent_path()
                                                 : fs::path("."));
  ds.samples = parse_manifest(doc, ds.root, opts.check_files);
  return ds;
}

json manifest_to_json(const std::vector<SampleRecord>& samples) {
  json arr = json::array();
  for (const auto& s : samples) {
    json j;
    j["sample_id"] = s.sample_id;
    j["image_h"] = s.image_h;
    j["image_w"] = s.image_w;
    j["grid"] = {{"rows", s.grid.rows}, {"cols", s.grid.cols},
                 {"channels", s.grid.channels}};
    j["logits_path"] = s.logits_path;
    j["prompt_id"] = s.prompt_id;
    j["gt_mask_path"] = s.gt_mask_path ? json(*s.gt_mask_path) : json(nullptr);
    j["split"] = to_string(s.split);
    if (s.features_path) j["features_path"] = *s.features_path;
    if (s.vlm_features_path) j["vlm_features_path"] = *s.vlm_features_path;
    if (s.image_path) j["image_path"] = *s.image_path;
    if (s.noise_sigma) j["noise_sigma"] = *s.noise_sigma;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

std::string encode_manifest(const std::vector<SampleRecord>& samples) {
  return dump_json(manifest_to_json(samples));
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& samples) {
  fsutil::write_file_atomic(path, encode_manifest(samples));
}

std::vector<BoxRecord> parse_boxes(const std::string& text, const std::string& origin) {
  std::vector<BoxRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      BoxRecord r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.box = {j.at("x").get<double>(), j.at("y").get<double>(),
               j.at("w").get<double>(), j.at("h").get<double>()};
      if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
        r.score = it->get<double>();
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("bad box record at " + origin + ":" +
                       std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<BoxRecord> read_boxes(const fs::path& path) {
  return parse_boxes(fsutil::read_file(path), path.string());
}

std::string encode_boxes(const std::vector<BoxRecord>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    json j;
    j["sample_id"] = b.sample_id;
    j["x"] = b.box.x;
    j["y"] = b.box.y;
    j["w"] = b.box.w;
    j["h"] = b.box.h;
    if (b.score) j["score"] = *b.score;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_boxes(const fs::path& path, const std::vector<BoxRecord>& boxes) {
  fsutil::write_file_atomic(path, encode_boxes(boxes));
}

}  // namespace ppboost
