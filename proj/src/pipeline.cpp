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

#include "ppboost/pipeline.hpp"

#include <algorithm>
#include <set>

#include "ppboost/boxgeom.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/npy.hpp"
#include "ppboost/parallel.hpp"
#include "ppboost/segmenter.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::pipeline {

namespace fs = std::filesystem;

namespace {

const SampleRecord& lookup(const Dataset& ds, const std::string& id) {
  const SampleRecord* rec = ds.find(id);
  if (!rec) throw ValidationError("sample '" + id + "' is not in the manifest");
  return *rec;
}

BBox full_image(const SampleRecord& rec) {
  return {0.0, 0.0, static_cast<double>(rec.image_w), static_cast<double>(rec.image_h)};
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  return out;
}

}  // namespace

GridMap detector_input(const Dataset& ds, const SampleRecord& rec) {
  if (!rec.features_path) return confmap::load_logits(ds, rec);
  GridMap g = npy::read_grid(ds.path_of(*rec.features_path));
  if (g.rows() != rec.grid.rows || g.cols() != rec.grid.cols) {
    throw ShapeError("features for '" + rec.sample_id + "' do not match the declared grid");
  }
  return g;
}

GridMap extraction_map(const GridMap& logits, const PipelineConfig& cfg) {
  const double tau = cfg.extract_map == ExtractMap::kHigh ? cfg.confmap.tau_high : cfg.confmap.tau_low;
  return confmap::sigmoid_map(logits, tau);
}

ExtractResult extract_boxes(const Dataset& ds, const std::vector<SampleRecord>& samples,
                            const PipelineConfig& cfg, std::size_t jobs) {
  std::vector<std::optional<BBox>> found(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const auto& rec = samples[i];
    try {
      found[i] = boxgeom::extract_from_grid(extraction_map(confmap::load_logits(ds, rec), cfg),
                                            rec.image_h, rec.image_w, cfg.extract);
    } catch (const EmptyForeground&) {
      found[i] = std::nullopt;
    }
  });
  ExtractResult out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (found[i]) {
      out.boxes.push_back({samples[i].sample_id, *found[i], std::nullopt});
    } else {
      out.empty.push_back(samples[i].sample_id);
    }
  }
  return out;
}

semisup::TrainImage train_image(const Dataset& ds, const SampleRecord& rec,
                                std::vector<BBox> boxes) {
  return {rec.sample_id, detector_input(ds, rec), rec.image_h, rec.image_w, std::move(boxes)};
}

TrainOutcome train_detector(const Dataset& ds, const std::vector<SampleRecord>& train_samples,
                            const std::vector<BoxRecord>& pseudo, const PipelineConfig& cfg,
                            std::size_t jobs, const semisup::LogSink& sink) {
  std::vector<semisup::LabeledPair> kept;
  for (const auto& b : pseudo) kept.push_back({lookup(ds, b.sample_id), b.box});
  TrainOutcome out;
  out.split = semisup::split_dataset(kept, train_samples, cfg.semisup.labeled_fraction,
                                     cfg.semisup.seed);
  std::vector<semisup::TrainImage> labeled(out.split.labeled.size());
  std::vector<semisup::TrainImage> unlabeled(out.split.unlabeled.size());
  parallel_for(labeled.size(), jobs, [&](std::size_t i) {
    labeled[i] = train_image(ds, out.split.labeled[i].record, {out.split.labeled[i].box});
  });
  parallel_for(unlabeled.size(), jobs, [&](std::size_t i) {
    unlabeled[i] = train_image(ds, out.split.unlabeled[i]);
  });
  out.result = semisup::train_semisup(labeled, unlabeled, cfg.detector, cfg.semisup, cfg.train,
                                      jobs, sink);
  return out;
}

std::vector<BoxRecord> detect(const Dataset& ds, const std::vector<SampleRecord>& samples,
                              const detector::DetectorParams& params, const PipelineConfig& cfg,
                              std::size_t jobs) {
  std::vector<semisup::TrainImage> images(samples.size());
  parallel_for(samples.size(), jobs,
               [&](std::size_t i) { images[i] = train_image(ds, samples[i]); });
  const auto top = semisup::predict_top1(images, params, cfg.detector, jobs);
  std::vector<BoxRecord> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (top[i]) {
      out.push_back({samples[i].sample_id, top[i]->box, top[i]->score});
    } else {
      out.push_back({samples[i].sample_id, full_image(samples[i]), 0.0});
    }
  }
  return out;
}

std::vector<BoxRecord> expand(const Dataset& ds, const std::vector<BoxRecord>& dets,
                              const boxgeom::ExpansionConfig& cfg) {
  cfg.validate();
  if (dets.empty()) return {};
  std::vector<double> scores;
  for (const auto& d : dets) {
    if (!d.score) throw ValidationError("expand needs scored detections ('" + d.sample_id + "')");
    scores.push_back(*d.score);
  }
  const double phi = boxgeom::resolve_phi(scores, cfg);
  std::vector<BoxRecord> out;
  for (const auto& d : dets) {
    const auto& rec = lookup(ds, d.sample_id);
    out.push_back({d.sample_id,
                   boxgeom::selective_expand_one({d.box, *d.score}, cfg, phi, rec.image_h,
                                                 rec.image_w),
                   d.score});
  }
  return out;
}

SegmentResult segment(const Dataset& ds, const std::vector<BoxRecord>& prompts,
                      const PipelineConfig& cfg, std::size_t jobs) {
  cfg.segment.validate();
  SegmentResult out;
  if (cfg.segment.backend == segmenter::Backend::kExternal) {
    std::vector<segmenter::SegmentRequest> batch;
    for (const auto& p : prompts) batch.push_back({lookup(ds, p.sample_id), p.box});
    for (auto& o : segmenter::external_segment(batch, cfg.exchange_dir, cfg.segment)) {
      if (o.mask) {
        out.masks.emplace(o.sample_id, std::move(*o.mask));
      } else {
        out.errors.emplace(o.sample_id, o.error);
      }
    }
    return out;
  }
  std::vector<std::string> no_gt;
  for (const auto& p : prompts) {
    if (!lookup(ds, p.sample_id).gt_mask_path) no_gt.push_back(p.sample_id);
  }
  if (!no_gt.empty()) {
    throw ValidationError("mock segmenter needs gt_mask_path for: " + join_ids(no_gt));
  }
  std::vector<std::optional<Mask>> masks(prompts.size());
  std::vector<std::string> errors(prompts.size());
  parallel_for(prompts.size(), jobs, [&](std::size_t i) {
    const auto& rec = lookup(ds, prompts[i].sample_id);
    try {
      const Mask gt = npy::read_mask(ds.path_of(*rec.gt_mask_path));
      masks[i] = segmenter::binarize_probabilities(
          segmenter::mock_segment(gt, prompts[i].box, cfg.segment,
                                  split(cfg.semisup.seed, "segment:" + rec.sample_id)),
          cfg.segment.tau_seg);
    } catch (const ValidationError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (masks[i]) {
      out.masks.emplace(prompts[i].sample_id, std::move(*masks[i]));
    } else {
      out.errors.emplace(prompts[i].sample_id, errors[i]);
    }
  }
  return out;
}

BBox gt_box(const Dataset& ds, const SampleRecord& rec) {
  if (!rec.gt_mask_path) throw ValidationError("sample '" + rec.sample_id + "' has no GT mask");
  return boxgeom::tight_box(npy::read_mask(ds.path_of(*rec.gt_mask_path)));
}

metrics::EvalReport evaluate(const Dataset& ds, const std::vector<SampleRecord>& samples,
                             const std::map<std::string, Mask>& pred,
                             const std::vector<BoxRecord>* dets, const metrics::NsdConfig& nsd,
                             std::size_t jobs) {
  nsd.validate();
  if (samples.empty()) throw ValidationError("nothing to evaluate: no samples");
  std::vector<std::string> no_gt, no_pred;
  for (const auto& s : samples) {
    if (!s.gt_mask_path) no_gt.push_back(s.sample_id);
    if (!pred.count(s.sample_id)) no_pred.push_back(s.sample_id);
  }
  if (!no_gt.empty()) throw ValidationError("samples without gt_mask_path: " + join_ids(no_gt));
  if (!no_pred.empty()) {
    throw ValidationError("missing predicted masks for: " + join_ids(no_pred));
  }
  std::vector<metrics::SampleMetrics> rows(samples.size());
  std::vector<BBox> gts(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const auto& s = samples[i];
    const Mask gt = npy::read_mask(ds.path_of(*s.gt_mask_path));
    const Mask& p = pred.at(s.sample_id);
    if (!p.same_dims(gt)) {
      throw ShapeError("predicted mask for '" + s.sample_id + "' is " +
                       std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                       ", GT is " + std::to_string(gt.height()) + "x" +
                       std::to_string(gt.width()));
    }
    rows[i] = {s.sample_id, metrics::dice(p, gt), metrics::nsd(p, gt, nsd)};
    if (dets && gt.count() > 0) gts[i] = boxgeom::tight_box(gt);
  });
  auto report = metrics::make_report(std::move(rows), nsd);
  if (dets) {
    std::vector<metrics::GroundTruth> g;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (gts[i].valid()) g.push_back({samples[i].sample_id, gts[i]});
    }
    std::set<std::string> wanted;
    for (const auto& s : samples) wanted.insert(s.sample_id);
    std::vector<metrics::ScoredBox> d;
    for (const auto& b : *dets) {
      if (wanted.count(b.sample_id)) d.push_back({b.sample_id, {b.box, b.score.value_or(1.0)}});
    }
    if (!g.empty()) {
      const auto ap = metrics::average_precision(d, g, metrics::coco_thresholds());
      report.detection = metrics::DetectionSummary{ap.map, *ap.at(0.5), *ap.at(0.75)};
    }
  }
  return report;
}

std::string dataset_digest(const Dataset& ds) {
  std::string acc = encode_manifest(ds.samples);
  for (const auto& s : ds.samples) {
    acc += s.sample_id;
    for (const auto* p : {&s.logits_path}) acc += fsutil::sha256_file(ds.path_of(*p));
    for (const auto* opt : {&s.features_path, &s.gt_mask_path, &s.vlm_features_path}) {
      if (*opt && fs::exists(ds.path_of(**opt))) acc += fsutil::sha256_file(ds.path_of(**opt));
    }
  }
  return fsutil::sha256_hex(acc);
}

nlohmann::json provenance(const PipelineConfig& cfg, const Dataset& ds) {
  return {{"tool", "ppboost"},
          {"version", PPBOOST_VERSION},
          {"config_sha256", config_hash(cfg)},
          {"seeds", {{"synthetic", cfg.data.synthetic.seed.value}, {"semisup", cfg.semisup.seed.value}}},
          {"dataset_sha256", dataset_digest(ds)},
          {"n_samples", ds.samples.size()}};
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const PipelineConfig& cfg, const nlohmann::json& inputs,
                        const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["tool"] = "ppboost";
  j["version"] = PPBOOST_VERSION;
  j["command"] = command;
  j["config_sha256"] = config_hash(cfg);
  j["config"] = config_to_json(cfg);
  j["seeds"] = {{"synthetic", cfg.data.synthetic.seed.value}, {"semisup", cfg.semisup.seed.value}};
  j["simd"] = std::string(simd::isa_name(simd::kernels().isa));
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  fsutil::write_file_atomic(out_dir / ("run_manifest." + command + ".json"), dump_json(j));
}

std::vector<PerturbRow> perturb_study(const Dataset& ds, const std::vector<SampleRecord>& samples,
                                      const std::vector<double>& ratios,
                                      const PipelineConfig& cfg, std::size_t jobs) {
  auto seg_cfg = cfg;
  seg_cfg.segment.backend = segmenter::Backend::kMock;
  std::vector<PerturbRow> rows;
  for (double rho : ratios) {
    std::vector<BoxRecord> prompts;
    for (const auto& s : samples) {
      prompts.push_back({s.sample_id, boxgeom::perturb_box(gt_box(ds, s), rho), std::nullopt});
    }
    const auto res = segment(ds, prompts, seg_cfg, jobs);
    const auto report = evaluate(ds, samples, res.masks, nullptr, cfg.nsd, jobs);
    rows.push_back({rho, report.mdsc, report.mnsd});
  }
  return rows;
}

RunResult run(const Dataset& ds, const PipelineConfig& cfg, std::size_t jobs,
              const std::optional<fs::path>& out_dir) {
  cfg.validate();
  const auto train = ds.with_split(Split::kTrain);
  const auto infer = ds.with_split(Split::kInfer);
  if (infer.empty()) throw ValidationError("manifest has no infer-split samples");

  RunResult res;
  if (cfg.ablation.detector) {
    if (train.empty()) throw ValidationError("manifest has no train-split samples");
    std::vector<SampleRecord> kept;
    if (cfg.ablation.filter) {
      res.scores = confmap::score_and_filter(ds, train, cfg.confmap, cfg.filter, jobs);
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (res.scores[i].kept) kept.push_back(train[i]);
      }
    } else {
      kept = train;
    }
    res.pseudo = extract_boxes(ds, kept, cfg, jobs);
    res.training = train_detector(ds, train, res.pseudo.boxes, cfg, jobs);
    const auto& params =
        cfg.infer_with_teacher ? res.training->result.teacher : res.training->result.student;
    res.detections = detect(ds, infer, params, cfg, jobs);
    res.prompts = cfg.ablation.expand ? expand(ds, res.detections, cfg.expand) : res.detections;
  } else {
    // Direct prompting: raw pseudo-boxes from the inference maps.
    res.pseudo = extract_boxes(ds, infer, cfg, jobs);
    std::map<std::string, BBox> found;
    for (const auto& b : res.pseudo.boxes) found.emplace(b.sample_id, b.box);
    for (const auto& s : infer) {
      auto it = found.find(s.sample_id);
      res.prompts.push_back({s.sample_id, it != found.end() ? it->second : full_image(s),
                             std::nullopt});
    }
  }

  res.segmentation = segment(ds, res.prompts, cfg, jobs);
  std::map<std::string, Mask> pred = res.segmentation.masks;
  for (const auto& s : infer) {
    if (!pred.count(s.sample_id)) pred.emplace(s.sample_id, Mask(s.image_h, s.image_w));
  }
  res.report = evaluate(ds, infer, pred, cfg.ablation.detector ? &res.detections : nullptr,
                        cfg.nsd, jobs);
  auto snapshot = config_to_json(cfg);
  snapshot["data"].erase("out_dir");
  res.report.config = snapshot;
  res.report.provenance = provenance(cfg, ds);
  if (!res.segmentation.errors.empty()) {
    nlohmann::json errs = nlohmann::json::object();
    for (const auto& [id, msg] : res.segmentation.errors) errs[id] = msg;
    res.report.provenance["segment_errors"] = errs;
  }

  if (out_dir) {
    const fs::path& o = *out_dir;
    std::vector<std::string> outputs;
    auto note = [&](const std::string& name) { outputs.push_back(name); };
    if (!res.scores.empty()) {
      confmap::write_scores(o / "scores.jsonl", res.scores);
      note("scores.jsonl");
    }
    write_boxes(o / "pseudo_boxes.jsonl", res.pseudo.boxes);
    note("pseudo_boxes.jsonl");
    if (res.training) {
      const detector::CheckpointMeta meta{cfg.train.iters, cfg.semisup.seed.value};
      detector::write_checkpoint(o / "student.json", res.training->result.student, meta);
      detector::write_checkpoint(o / "teacher.json", res.training->result.teacher, meta);
      fsutil::write_file_atomic(o / "train_log.jsonl", semisup::encode_log(res.training->result.log));
      write_boxes(o / "detections.jsonl", res.detections);
      note("student.json");
      note("teacher.json");
      note("train_log.jsonl");
      note("detections.jsonl");
    }
    write_boxes(o / "prompts.jsonl", res.prompts);
    note("prompts.jsonl");
    for (const auto& [id, m] : res.segmentation.masks) npy::write_mask(o / "masks" / (id + ".npy"), m);
    note("masks/");
    const auto rj = metrics::report_to_json(res.report);
    fsutil::write_file_atomic(o / "eval_report.json", dump_json(rj));
    fsutil::write_file_atomic(o / "per_sample.csv", metrics::report_csv(res.report));
    fsutil::write_file_atomic(o / "metrics.svg", metrics::report_svg(res.report));
    note("eval_report.json");
    note("per_sample.csv");
    note("metrics.svg");
    write_run_manifest(o, "pipeline", cfg,
                       {{"dataset_sha256", res.report.provenance["dataset_sha256"]}}, outputs);
  }
  return res;
}

}  // namespace ppboost::pipeline
