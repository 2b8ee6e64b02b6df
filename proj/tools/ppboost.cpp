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

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ppboost/boxgeom.hpp"
#include "ppboost/config.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/manifest.hpp"
#include "ppboost/metrics.hpp"
#include "ppboost/npy.hpp"
#include "ppboost/pipeline.hpp"
#include "ppboost/segmenter.hpp"
#include "ppboost/synthgen.hpp"

namespace fs = std::filesystem;
using namespace ppboost;

namespace {

struct Common {
  std::string config;
  std::string preset = "desk";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
};

PipelineConfig load(const Common& c) {
  PipelineConfig base = preset(c.preset);
  return c.config.empty() ? base : load_config(c.config, base);
}

Dataset open_dataset(const std::string& manifest) {
  if (manifest.empty()) throw ValidationError("--manifest is required");
  return read_manifest(manifest);
}

Split split_arg(const std::string& s) { return parse_split(s); }

std::vector<SampleRecord> select(const Dataset& ds, const std::string& split) {
  if (split == "all") return ds.samples;
  return ds.with_split(split_arg(split));
}

std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError("bad ratio '" + tok + "' in --ratios");
    }
  }
  if (out.empty()) throw ValidationError("--ratios is empty");
  return out;
}

void apply_phi(const std::string& phi, boxgeom::ExpansionConfig& cfg) {
  if (phi == "median") {
    cfg.phi_mode = boxgeom::PhiMode::kMedian;
  } else if (phi.rfind("fixed:", 0) == 0) {
    cfg.phi_mode = boxgeom::PhiMode::kFixed;
    try {
      cfg.phi = std::stod(phi.substr(6));
    } catch (const std::exception&) {
      throw ValidationError("bad --phi value '" + phi + "'");
    }
  } else {
    throw ValidationError("--phi must be 'median' or 'fixed:<value>'");
  }
}

nlohmann::json file_digest(const fs::path& p) {
  return {{"path", p.string()}, {"sha256", fsutil::sha256_file(p)}};
}

std::map<std::string, Mask> read_mask_dir(const fs::path& dir, const std::vector<SampleRecord>& samples) {
  std::map<std::string, Mask> out;
  for (const auto& s : samples) {
    const fs::path p = dir / (s.sample_id + ".npy");
    if (fs::exists(p)) out.emplace(s.sample_id, npy::read_mask(p));
  }
  return out;
}

void print_report(const metrics::EvalReport& r) {
  std::printf("samples  %zu\nmDSC     %.4f\nmNSD     %.4f\n", r.per_sample.size(), r.mdsc, r.mnsd);
  if (r.detection) {
    std::printf("mAP      %.4f\nAP50     %.4f\nAP75     %.4f\n", r.detection->map, r.detection->ap50,
                r.detection->ap75);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-to-strong box prompt pipeline toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--preset", common.preset, "Base config: desk or full");
  app.add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a seeded synthetic benchmark");
  std::string gen_out = "synthetic";
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_noise;
  auto* gen_n_opt = gen->add_option("--n", gen_n, "Number of samples");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--noise", gen_noise, "Noise sigma range lo,hi");
  gen->add_option("--out", gen_out, "Output directory");

  // confmap
  auto* cm = app.add_subcommand("confmap", "Per-sample confidence maps and stability scores");
  std::string cm_manifest, cm_out = "confmap", cm_prompts;
  bool cm_dump = false;
  cm->add_option("--manifest", cm_manifest)->required();
  cm->add_option("--out", cm_out, "Output directory");
  cm->add_option("--prompts", cm_prompts,
                 "Directory of <prompt_id>.npy embeddings; writes cosine logits for samples "
                 "with vlm_features_path");
  cm->add_flag("--dump", cm_dump, "Write low/high/softmax maps as NPY");

  // filter
  auto* flt = app.add_subcommand("filter", "KL stability filter");
  std::string flt_manifest, flt_out = "scores.jsonl", flt_split = "train";
  double flt_keep = 0.30, flt_tau = -1.0;
  flt->add_option("--manifest", flt_manifest)->required();
  auto* keep_opt = flt->add_option("--keep", flt_keep, "Kept fraction (percentile mode)");
  auto* tau_opt = flt->add_option("--tau-kl", flt_tau, "Absolute KL threshold");
  flt->add_option("--split", flt_split, "train, infer or all");
  flt->add_option("--out", flt_out);
  tau_opt->excludes(keep_opt);

  // extract-bbox
  auto* ext = app.add_subcommand("extract-bbox", "Pseudo-boxes from confidence maps");
  std::string ext_manifest, ext_scores, ext_out = "pseudo_boxes.jsonl", ext_split = "train";
  ext->add_option("--manifest", ext_manifest)->required();
  ext->add_option("--scores", ext_scores, "Filter output; only kept samples are used");
  ext->add_option("--split", ext_split, "Used when --scores is absent");
  ext->add_option("--out", ext_out);

  // train-detector
  auto* trn = app.add_subcommand("train-detector", "Teacher-student detector training");
  std::string trn_manifest, trn_pseudo, trn_out = "detector";
  double trn_frac = 0, trn_lambda = 0, trn_ema = 0, trn_lr = 0;
  int trn_burn = 0, trn_iters = 0;
  std::uint64_t trn_seed = 0;
  trn->add_option("--manifest", trn_manifest)->required();
  trn->add_option("--pseudo", trn_pseudo, "Pseudo-box JSONL")->required();
  trn->add_option("--out", trn_out, "Output directory");
  auto* o_frac = trn->add_option("--labeled-fraction", trn_frac);
  auto* o_burn = trn->add_option("--burn-in", trn_burn);
  auto* o_lambda = trn->add_option("--lambda", trn_lambda);
  auto* o_ema = trn->add_option("--ema", trn_ema);
  auto* o_iters = trn->add_option("--iters", trn_iters);
  auto* o_lr = trn->add_option("--lr", trn_lr);
  auto* o_seed = trn->add_option("--seed", trn_seed);

  // detect
  auto* det = app.add_subcommand("detect", "Top-1 detection per image");
  std::string det_manifest, det_ckpt, det_split = "infer", det_out = "detections.jsonl";
  det->add_option("--manifest", det_manifest)->required();
  det->add_option("--checkpoint", det_ckpt)->required()->check(CLI::ExistingFile);
  det->add_option("--split", det_split);
  det->add_option("--out", det_out);

  // expand
  auto* exp = app.add_subcommand("expand", "Selective box expansion");
  std::string exp_manifest, exp_dets, exp_phi = "median", exp_out = "prompts.jsonl";
  double exp_ratio = 0;
  bool exp_no_clamp = false;
  exp->add_option("--manifest", exp_manifest)->required();
  exp->add_option("--dets", exp_dets)->required();
  auto* o_ratio = exp->add_option("--ratio", exp_ratio);
  exp->add_option("--phi", exp_phi, "median or fixed:<value>");
  exp->add_flag("--no-clamp", exp_no_clamp);
  exp->add_option("--out", exp_out);

  // segment
  auto* seg = app.add_subcommand("segment", "Box prompts to masks");
  std::string seg_manifest, seg_prompts, seg_backend, seg_exchange, seg_out = "masks";
  double seg_timeout = 0;
  seg->add_option("--manifest", seg_manifest)->required();
  seg->add_option("--prompts", seg_prompts, "Box JSONL")->required();
  seg->add_option("--backend", seg_backend, "mock or external");
  seg->add_option("--exchange-dir", seg_exchange);
  auto* o_timeout = seg->add_option("--timeout", seg_timeout, "Seconds");
  seg->add_option("--out", seg_out, "Mask directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Dice, NSD and detection AP");
  std::string ev_manifest, ev_pred, ev_dets, ev_split = "infer", ev_out = "eval_report.json",
                           ev_csv, ev_svg;
  ev->add_option("--manifest,--gt", ev_manifest, "Manifest with GT masks")->required();
  ev->add_option("--pred-masks", ev_pred, "Directory of <sample_id>.npy masks")->required();
  ev->add_option("--dets", ev_dets, "Detections JSONL for AP");
  ev->add_option("--split", ev_split);
  ev->add_option("--out", ev_out);
  ev->add_option("--csv", ev_csv);
  ev->add_option("--svg", ev_svg);

  // perturb-study
  auto* pst = app.add_subcommand("perturb-study", "mDSC under scaled GT box prompts");
  std::string pst_manifest, pst_ratios = "-0.2,-0.15,-0.1,0.1,0.15,0.2", pst_split = "all",
                            pst_out = "perturb_study.json";
  pst->add_option("--manifest", pst_manifest)->required();
  pst->add_option("--ratios", pst_ratios);
  pst->add_option("--split", pst_split);
  pst->add_option("--out", pst_out);

  // pipeline
  auto* pip = app.add_subcommand("pipeline", "End-to-end run with ablation toggles");
  std::string pip_manifest, pip_out;
  bool no_filter = false, no_detector = false, no_expand = false;
  pip->add_option("--manifest", pip_manifest, "Dataset (default: generate from data.synthetic)");
  pip->add_option("--out", pip_out, "Output directory (default: data.out_dir)");
  pip->add_flag("--no-filter", no_filter);
  pip->add_flag("--no-detector", no_detector, "Prompt the segmenter with raw pseudo-boxes");
  pip->add_flag("--no-expand", no_expand);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    PipelineConfig cfg = load(common);
    const std::size_t jobs = common.jobs;

    if (*gen) {
      auto& s = cfg.data.synthetic;
      if (gen_n_opt->count()) s.n_samples = gen_n;
      if (gen_seed_opt->count()) s.seed.value = gen_seed;
      if (!gen_noise.empty()) {
        const auto r = parse_ratios(gen_noise);
        if (r.size() != 2) throw ValidationError("--noise needs lo,hi");
        s.noise_sigma_range = {r[0], r[1]};
      }
      s.validate();
      const auto manifest = synth::generate(s, gen_out, jobs);
      pipeline::write_run_manifest(gen_out, "gen-synthetic", cfg, nlohmann::json::array(),
                                   {"manifest.json", "gt_boxes.jsonl", "logits/", "features/", "masks/"});
      std::printf("wrote %zu samples to %s\n", s.n_samples, manifest.string().c_str());
      return 0;
    }

    if (*cm) {
      const Dataset ds = open_dataset(cm_manifest);
      cfg.confmap.validate();
      // Materialize cosine logits first so the rest reads one format.
      if (!cm_prompts.empty()) {
        for (const auto& s : ds.samples) {
          if (!s.vlm_features_path) continue;
          PromptEmbedding p{s.prompt_id, npy::read_vector(fs::path(cm_prompts) / (s.prompt_id + ".npy"))};
          const GridMap logits =
              confmap::cosine_logits(npy::read_grid(ds.path_of(*s.vlm_features_path)), p);
          npy::write_grid(ds.path_of(s.logits_path), logits);
        }
      }
      std::string rows;
      for (const auto& s : ds.samples) {
        const GridMap logits = confmap::load_logits(ds, s);
        const auto maps = confmap::sigmoid_maps(logits, cfg.confmap);
        const GridMap soft = confmap::softmax_map(logits, cfg.confmap.tau_softmax);
        nlohmann::json j{{"sample_id", s.sample_id},
                         {"kl", confmap::stability_kl(logits, cfg.confmap)},
                         {"low_max", maps.low.max()},
                         {"high_max", maps.high.max()},
                         {"softmax_max", soft.max()}};
        rows += j.dump() + "\n";
        if (cm_dump) {
          const fs::path d = fs::path(cm_out) / "maps";
          npy::write_grid(d / (s.sample_id + "_low.npy"), maps.low);
          npy::write_grid(d / (s.sample_id + "_high.npy"), maps.high);
          npy::write_grid(d / (s.sample_id + "_softmax.npy"), soft);
        }
      }
      fsutil::write_file_atomic(fs::path(cm_out) / "confmap.jsonl", rows);
      pipeline::write_run_manifest(cm_out, "confmap", cfg, {file_digest(cm_manifest)},
                                   {"confmap.jsonl"});
      return 0;
    }

    if (*flt) {
      const Dataset ds = open_dataset(flt_manifest);
      if (keep_opt->count()) cfg.filter.keep_fraction = flt_keep;
      if (tau_opt->count()) {
        cfg.filter.mode = confmap::FilterMode::kAbsolute;
        cfg.filter.tau_kl = flt_tau;
      }
      const auto scores =
          confmap::score_and_filter(ds, select(ds, flt_split), cfg.confmap, cfg.filter, jobs);
      confmap::write_scores(flt_out, scores);
      const auto kept = std::count_if(scores.begin(), scores.end(), [](auto& s) { return s.kept; });
      pipeline::write_run_manifest(fs::path(flt_out).parent_path(), "filter", cfg,
                                   {file_digest(flt_manifest)}, {flt_out});
      std::printf("kept %td of %zu samples\n", kept, scores.size());
      return 0;
    }

    if (*ext) {
      const Dataset ds = open_dataset(ext_manifest);
      std::vector<SampleRecord> todo;
      if (!ext_scores.empty()) {
        for (const auto& s : confmap::read_scores(ext_scores)) {
          if (!s.kept) continue;
          const SampleRecord* rec = ds.find(s.sample_id);
          if (!rec) throw ValidationError("score for unknown sample '" + s.sample_id + "'");
          todo.push_back(*rec);
        }
      } else {
        todo = select(ds, ext_split);
      }
      const auto res = pipeline::extract_boxes(ds, todo, cfg, jobs);
      write_boxes(ext_out, res.boxes);
      if (!res.empty.empty()) {
        std::fprintf(stderr, "warning: %zu sample(s) had no foreground and were skipped\n",
                     res.empty.size());
      }
      nlohmann::json inputs{file_digest(ext_manifest)};
      if (!ext_scores.empty()) inputs.push_back(file_digest(ext_scores));
      pipeline::write_run_manifest(fs::path(ext_out).parent_path(), "extract-bbox", cfg, inputs,
                                   {ext_out});
      std::printf("extracted %zu pseudo-boxes\n", res.boxes.size());
      return 0;
    }

    if (*trn) {
      const Dataset ds = open_dataset(trn_manifest);
      if (o_frac->count()) cfg.semisup.labeled_fraction = trn_frac;
      if (o_burn->count()) cfg.semisup.burn_in_iters = trn_burn;
      if (o_lambda->count()) cfg.semisup.unsup_weight = trn_lambda;
      if (o_ema->count()) cfg.semisup.ema_decay = trn_ema;
      if (o_iters->count()) cfg.train.iters = trn_iters;
      if (o_lr->count()) cfg.train.lr = trn_lr;
      if (o_seed->count()) cfg.semisup.seed.value = trn_seed;
      cfg.validate();
      const auto pseudo = read_boxes(trn_pseudo);
      const auto out = pipeline::train_detector(ds, ds.with_split(Split::kTrain), pseudo, cfg, jobs);
      const fs::path o = trn_out;
      const detector::CheckpointMeta meta{cfg.train.iters, cfg.semisup.seed.value};
      detector::write_checkpoint(o / "student.json", out.result.student, meta);
      detector::write_checkpoint(o / "teacher.json", out.result.teacher, meta);
      fsutil::write_file_atomic(o / "train_log.jsonl", semisup::encode_log(out.result.log));
      pipeline::write_run_manifest(o, "train-detector", cfg,
                                   {file_digest(trn_manifest), file_digest(trn_pseudo)},
                                   {"student.json", "teacher.json", "train_log.jsonl"});
      std::printf("labeled %zu, unlabeled %zu, final L_sup %.4f\n", out.split.labeled.size(),
                  out.split.unlabeled.size(), out.result.log.back().l_sup);
      return 0;
    }

    if (*det) {
      const Dataset ds = open_dataset(det_manifest);
      const auto params = detector::read_checkpoint(det_ckpt);
      cfg.detector.k = params.k();
      cfg.detector.anchor_scale = params.anchor_scale();
      cfg.detector.pool_radii = params.pool_radii();
      const auto dets = pipeline::detect(ds, select(ds, det_split), params, cfg, jobs);
      write_boxes(det_out, dets);
      pipeline::write_run_manifest(fs::path(det_out).parent_path(), "detect", cfg,
                                   {file_digest(det_manifest), file_digest(det_ckpt)}, {det_out});
      return 0;
    }

    if (*exp) {
      const Dataset ds = open_dataset(exp_manifest);
      if (o_ratio->count()) cfg.expand.ratio = exp_ratio;
      if (exp_no_clamp) cfg.expand.clamp_to_image = false;
      apply_phi(exp_phi, cfg.expand);
      // Pass 1 reads every score (phi), pass 2 expands.
      const auto dets = read_boxes(exp_dets);
      const auto out = pipeline::expand(ds, dets, cfg.expand);
      write_boxes(exp_out, out);
      pipeline::write_run_manifest(fs::path(exp_out).parent_path(), "expand", cfg,
                                   {file_digest(exp_manifest), file_digest(exp_dets)}, {exp_out});
      return 0;
    }

    if (*seg) {
      const Dataset ds = open_dataset(seg_manifest);
      if (!seg_backend.empty()) cfg.segment.backend = segmenter::parse_backend(seg_backend);
      if (!seg_exchange.empty()) cfg.exchange_dir = seg_exchange;
      if (o_timeout->count()) cfg.segment.timeout_s = seg_timeout;
      const auto prompts = read_boxes(seg_prompts);
      const auto res = pipeline::segment(ds, prompts, cfg, jobs);
      for (const auto& [id, m] : res.masks) npy::write_mask(fs::path(seg_out) / (id + ".npy"), m);
      std::string errs;
      for (const auto& [id, msg] : res.errors) {
        errs += nlohmann::json{{"sample_id", id}, {"error", msg}}.dump() + "\n";
        std::fprintf(stderr, "error: %s: %s\n", id.c_str(), msg.c_str());
      }
      if (!errs.empty()) fsutil::write_file_atomic(fs::path(seg_out) / "errors.jsonl", errs);
      pipeline::write_run_manifest(seg_out, "segment", cfg,
                                   {file_digest(seg_manifest), file_digest(seg_prompts)}, {"*.npy"});
      std::printf("segmented %zu, failed %zu\n", res.masks.size(), res.errors.size());
      return res.errors.empty() ? 0 : 2;
    }

    if (*ev) {
      const Dataset ds = open_dataset(ev_manifest);
      const auto samples = select(ds, ev_split);
      const auto pred = read_mask_dir(ev_pred, samples);
      std::vector<BoxRecord> dets;
      if (!ev_dets.empty()) dets = read_boxes(ev_dets);
      auto report = pipeline::evaluate(ds, samples, pred, ev_dets.empty() ? nullptr : &dets,
                                       cfg.nsd, jobs);
      auto snapshot = config_to_json(cfg);
      snapshot["data"].erase("out_dir");
      report.config = snapshot;
      report.provenance = pipeline::provenance(cfg, ds);
      fsutil::write_file_atomic(ev_out, dump_json(metrics::report_to_json(report)));
      if (!ev_csv.empty()) fsutil::write_file_atomic(ev_csv, metrics::report_csv(report));
      if (!ev_svg.empty()) fsutil::write_file_atomic(ev_svg, metrics::report_svg(report));
      pipeline::write_run_manifest(fs::path(ev_out).parent_path(), "eval", cfg,
                                   {file_digest(ev_manifest)}, {ev_out});
      print_report(report);
      return 0;
    }

    if (*pst) {
      const Dataset ds = open_dataset(pst_manifest);
      auto ratios = parse_ratios(pst_ratios);
      if (std::find(ratios.begin(), ratios.end(), 0.0) == ratios.end()) ratios.push_back(0.0);
      std::sort(ratios.begin(), ratios.end());
      const auto samples = select(ds, pst_split);
      nlohmann::json rows = nlohmann::json::array();
      std::printf("%8s  %8s  %8s\n", "ratio", "mDSC", "mNSD");
      for (const auto& row : pipeline::perturb_study(ds, samples, ratios, cfg, jobs)) {
        rows.push_back({{"ratio", row.ratio}, {"mDSC", row.mdsc}, {"mNSD", row.mnsd}});
        std::printf("%8.3f  %8.4f  %8.4f\n", row.ratio, row.mdsc, row.mnsd);
      }
      fsutil::write_file_atomic(pst_out, dump_json({{"rows", rows}}));
      pipeline::write_run_manifest(fs::path(pst_out).parent_path(), "perturb-study", cfg,
                                   {file_digest(pst_manifest)}, {pst_out});
      return 0;
    }

    if (*pip) {
      if (no_filter) cfg.ablation.filter = false;
      if (no_detector) cfg.ablation.detector = false;
      if (no_expand) cfg.ablation.expand = false;
      if (!pip_out.empty()) cfg.data.out_dir = pip_out;
      if (!pip_manifest.empty()) cfg.data.manifest = pip_manifest;
      cfg.validate();
      const fs::path out = cfg.data.out_dir;
      fs::path manifest = cfg.data.manifest;
      if (manifest.empty()) manifest = synth::generate(cfg.data.synthetic, out / "data", jobs);
      const Dataset ds = read_manifest(manifest);
      const auto res = pipeline::run(ds, cfg, jobs, out);
      print_report(res.report);
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
