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

#include <doctest.h>

#include "helpers.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/pipeline.hpp"

using namespace ppboost;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config() {
  auto c = default_config();
  auto& s = c.data.synthetic;
  s.n_samples = 24;
  s.image_h = s.image_w = 64;
  s.grid = {16, 16, 1};
  s.seed = {9};
  c.detector.pool_radii = {2, 4};
  c.train.iters = 40;
  c.semisup.burn_in_iters = 20;
  c.semisup.batch_labeled = 2;
  c.semisup.batch_unlabeled = 2;
  c.filter.keep_fraction = 0.5;
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("end-to-end run writes a complete, reproducible artifact set") {
    testutil::TempDir d("pipe");
    const auto cfg = tiny_config();
    const Dataset ds = read_manifest(synth::generate(cfg.data.synthetic, d / "data"));
    const auto a = pipeline::run(ds, cfg, 1, d / "out_a");
    const auto b = pipeline::run(ds, cfg, 2, d / "out_b");

    CHECK(a.report.per_sample.size() == ds.with_split(Split::kInfer).size());
    CHECK(a.report.detection.has_value());
    CHECK(a.report.mdsc > 0.0);
    CHECK(a.report.mdsc <= 1.0);
    CHECK(a.prompts.size() == a.detections.size());
    for (const char* f : {"scores.jsonl", "pseudo_boxes.jsonl", "student.json", "teacher.json",
                          "train_log.jsonl", "detections.jsonl", "prompts.jsonl",
                          "eval_report.json", "per_sample.csv", "metrics.svg"}) {
      CHECK_MESSAGE(fs::exists(d / ("out_a/" + std::string(f))), f);
    }
    CHECK(fsutil::read_file(d / "out_a/eval_report.json") ==
          fsutil::read_file(d / "out_b/eval_report.json"));
    const auto rep = nlohmann::json::parse(fsutil::read_file(d / "out_a/eval_report.json"));
    CHECK(rep["config"]["expand"]["ratio"] == 0.1);
    CHECK_FALSE(rep["config"]["data"].contains("out_dir"));
  }

  TEST_CASE("ablations change the path taken") {
    testutil::TempDir d("pipe_abl");
    auto cfg = tiny_config();
    const Dataset ds = read_manifest(synth::generate(cfg.data.synthetic, d / "data"));
    cfg.ablation.detector = false;
    const auto direct = pipeline::run(ds, cfg);
    CHECK_FALSE(direct.training.has_value());
    CHECK_FALSE(direct.report.detection.has_value());
    CHECK(direct.prompts.size() == ds.with_split(Split::kInfer).size());

    cfg.ablation.detector = true;
    cfg.ablation.filter = false;
    cfg.ablation.expand = false;
    const auto plain = pipeline::run(ds, cfg);
    CHECK(plain.scores.empty());
    for (std::size_t i = 0; i < plain.prompts.size(); ++i) {
      CHECK(plain.prompts[i].box == plain.detections[i].box);
    }
  }

  TEST_CASE("evaluate lists samples without masks") {
    testutil::TempDir d("pipe_eval");
    auto cfg = tiny_config();
    cfg.data.synthetic.n_samples = 4;
    const Dataset ds = read_manifest(synth::generate(cfg.data.synthetic, d / "data"));
    std::map<std::string, Mask> pred;
    pred.emplace(ds.samples[0].sample_id, Mask(64, 64));
    try {
      pipeline::evaluate(ds, ds.samples, pred, nullptr, {});
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(ds.samples[1].sample_id) != std::string::npos);
    }
    for (const auto& s : ds.samples) pred[s.sample_id] = Mask(64, 64);
    const auto r = pipeline::evaluate(ds, ds.samples, pred, nullptr, {});
    CHECK(r.mdsc == 0.0);
  }

  TEST_CASE("gt box is the tight box of the GT mask") {
    testutil::TempDir d("pipe_gt");
    auto cfg = tiny_config();
    cfg.data.synthetic.n_samples = 3;
    const Dataset ds = read_manifest(synth::generate(cfg.data.synthetic, d / "data"));
    const auto s = synth::generate_sample(cfg.data.synthetic, 1, ds.samples[1].split,
                                          ds.samples[1].prompt_id);
    CHECK(pipeline::gt_box(ds, ds.samples[1]) == s.gt_box);
  }

  TEST_CASE("run manifests record command, inputs and outputs") {
    testutil::TempDir d("pipe_rm");
    pipeline::write_run_manifest(d.path(), "filter", default_config(), {{"scores", "s.jsonl"}},
                                 {"kept.jsonl"});
    const auto j = nlohmann::json::parse(fsutil::read_file(d / "run_manifest.filter.json"));
    CHECK(j["command"] == "filter");
    CHECK(j["outputs"][0] == "kept.jsonl");
    CHECK(j["config_sha256"] == config_hash(default_config()));
  }
}
