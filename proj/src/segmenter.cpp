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

#include "ppboost/segmenter.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ppboost/boxgeom.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/metrics.hpp"
#include "ppboost/npy.hpp"

namespace ppboost::segmenter {

namespace fs = std::filesystem;

Backend parse_backend(const std::string& s) {
  if (s == "mock") return Backend::kMock;
  if (s == "external") return Backend::kExternal;
  throw ConfigError("unknown segment backend '" + s + "' (mock, external)");
}

const char* to_string(Backend b) { return b == Backend::kMock ? "mock" : "external"; }

void SegmenterConfig::validate() const {
  if (!(tau_seg > 0.0 && tau_seg < 1.0)) throw ConfigError("segment.tau_seg must be in (0, 1)");
  if (!(mock_boundary_noise >= 0.0)) throw ConfigError("segment.mock_boundary_noise must be >= 0");
  if (!(mock_inside >= 0.0 && mock_inside <= 1.0 && mock_outside >= 0.0 && mock_outside <= 1.0)) {
    throw ConfigError("segment mock probabilities must be in [0, 1]");
  }
  if (!(timeout_s > 0.0)) throw ConfigError("segment.timeout_s must be > 0");
  if (!(poll_initial_s > 0.0 && poll_max_s >= poll_initial_s)) {
    throw ConfigError("segment poll intervals must satisfy 0 < initial <= max");
  }
}

GridMap mock_segment(const Mask& gt_mask, const BBox& prompt, const SegmenterConfig& cfg,
                     RngSeed seed) {
  cfg.validate();
  const std::size_t h = gt_mask.height(), w = gt_mask.width();
  const BBox box = boxgeom::clamp_box(prompt, h, w);
  if (!(box.w > 0.0 && box.h > 0.0)) {
    throw ValidationError("prompt box is degenerate inside the image");
  }
  Mask region(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      region.at(r, c) = gt_mask.at(r, c) && boxgeom::covers_pixel_center(box, r, c);
    }
  }
  if (cfg.mock_boundary_noise > 0.0) {
    Mask outside(h, w);
    for (std::size_t i = 0; i < outside.bits().size(); ++i) outside.bits()[i] = !region.bits()[i];
    const auto to_in = metrics::squared_distance_transform(region);
    const auto to_out = metrics::squared_distance_transform(outside);
    const double b2 = cfg.mock_boundary_noise * cfg.mock_boundary_noise;
    Rng rng(seed);
    Mask flipped = region;
    for (std::size_t i = 0; i < region.bits().size(); ++i) {
      const double d2 = region.bits()[i] ? to_out[i] : to_in[i];
      if (d2 <= b2 && rng.bernoulli(0.5)) flipped.bits()[i] = !region.bits()[i];
    }
    region = std::move(flipped);
  }
  GridMap prob({h, w, 1});
  for (std::size_t i = 0; i < region.bits().size(); ++i) {
    prob.values()[i] = region.bits()[i] ? cfg.mock_inside : cfg.mock_outside;
  }
  return prob;
}

Mask binarize_probabilities(const GridMap& prob, double tau_seg) {
  return boxgeom::binarize(prob, tau_seg);
}

std::string image_ref(const SampleRecord& rec) {
  if (rec.image_path) return *rec.image_path;
  if (rec.features_path) return *rec.features_path;
  return rec.logits_path;
}

std::string encode_requests(const std::vector<SegmentRequest>& batch) {
  std::string out;
  for (const auto& req : batch) {
    nlohmann::json j;
    j["sample_id"] = req.record.sample_id;
    j["image_ref"] = image_ref(req.record);
    j["x"] = req.box.x;
    j["y"] = req.box.y;
    j["w"] = req.box.w;
    j["h"] = req.box.h;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::map<std::string, std::string> read_runner_errors(const fs::path& path) {
  std::map<std::string, std::string> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(fsutil::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    try {
      auto j = nlohmann::json::parse(line);
      out[j.at("sample_id").get<std::string>()] = j.value("error", std::string("runner error"));
    } catch (const nlohmann::json::exception&) {
      // Malformed runner log lines carry no usable id.
    }
  }
  return out;
}

}  // namespace

std::vector<SegmentOutcome> external_segment(const std::vector<SegmentRequest>& batch,
                                             const fs::path& exchange_dir,
                                             const SegmenterConfig& cfg) {
  cfg.validate();
  fs::create_directories(exchange_dir);
  const fs::path marker = exchange_dir / "done.marker";
  // Stale outputs from an earlier batch must not be mistaken for answers.
  fs::remove(marker);
  fs::remove(exchange_dir / "errors.jsonl");
  for (const auto& req : batch) fs::remove(exchange_dir / (req.record.sample_id + "_prob.npy"));
  fsutil::write_file_atomic(exchange_dir / "requests.jsonl", encode_requests(batch));

  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(cfg.timeout_s);
  double wait = cfg.poll_initial_s;
  bool done = fs::exists(marker);
  while (!done && clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    wait = std::min(wait * 2.0, cfg.poll_max_s);
    done = fs::exists(marker);
  }

  std::vector<SegmentOutcome> out;
  out.reserve(batch.size());
  const auto runner_errors = read_runner_errors(exchange_dir / "errors.jsonl");
  for (const auto& req : batch) {
    SegmentOutcome o{req.record.sample_id, std::nullopt, {}};
    const fs::path prob_path = exchange_dir / (o.sample_id + "_prob.npy");
    if (!done) {
      o.error = "timeout after " + std::to_string(cfg.timeout_s) + " s waiting for done.marker";
    } else if (!fs::exists(prob_path)) {
      auto it = runner_errors.find(o.sample_id);
      o.error = "missing output " + prob_path.filename().string() +
                (it != runner_errors.end() ? " (runner: " + it->second + ")" : "");
    } else {
      try {
        const GridMap prob = npy::read_grid(prob_path);
        if (prob.channels() != 1 || prob.rows() != req.record.image_h ||
            prob.cols() != req.record.image_w) {
          o.error = "probability map is " + std::to_string(prob.rows()) + "x" +
                    std::to_string(prob.cols()) + ", expected " +
                    std::to_string(req.record.image_h) + "x" + std::to_string(req.record.image_w);
        } else if (prob.min() < 0.0 || prob.max() > 1.0) {
          o.error = "probabilities outside [0, 1]";
        } else {
          o.mask = binarize_probabilities(prob, cfg.tau_seg);
        }
      } catch (const Error& e) {
        o.error = e.what();
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace ppboost::segmenter
