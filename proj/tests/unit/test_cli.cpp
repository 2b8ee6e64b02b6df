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

#include <sys/wait.h>

#include <cstdlib>

#include <doctest.h>

#include "helpers.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/manifest.hpp"
#include "ppboost/npy.hpp"

using namespace ppboost;
namespace fs = std::filesystem;

namespace {

// Runs the CLI inside `dir`; stdout and stderr go to dir/cli.log.
int cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + PPBOOST_CLI_PATH + "' " + args +
                          " > cli.log 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string log_of(const fs::path& dir) { return fsutil::read_file(dir / "cli.log"); }

constexpr const char* kSmallConfig = R"({
  "data": {"synthetic": {"image_h": 64, "image_w": 64, "grid": {"rows": 16, "cols": 16, "channels": 1}}},
  "detector": {"pool_radii": [2, 4], "iters": 30},
  "semisup": {"burn_in_iters": 10, "batch_labeled": 2, "batch_unlabeled": 2}
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    testutil::TempDir d("cli_help");
    CHECK(cli(d.path(), "--help") == 0);
    CHECK(log_of(d.path()).find("gen-synthetic") != std::string::npos);
    CHECK(cli(d.path(), "") == 1);
    CHECK(cli(d.path(), "no-such-command") == 1);
    CHECK(cli(d.path(), "filter --manifest m.json --keep 0.3 --tau-kl 1") == 1);
    CHECK(cli(d.path(), "--preset huge gen-synthetic --n 2") == 1);
  }

  TEST_CASE("stage-by-stage chain over a generated dataset") {
    testutil::TempDir d("cli_chain");
    const fs::path p = d.path();
    fsutil::write_file_atomic(p / "cfg.json", kSmallConfig);
    const std::string g = "--config cfg.json ";

    REQUIRE(cli(p, g + "gen-synthetic --n 16 --seed 4 --noise 0,1 --out syn") == 0);
    CHECK(read_manifest(p / "syn/manifest.json").samples.size() == 16);
    CHECK(fs::exists(p / "syn/run_manifest.gen-synthetic.json"));

    CHECK(cli(p, g + "confmap --manifest syn/manifest.json --out cm --dump") == 0);
    CHECK(fs::exists(p / "cm/confmap.jsonl"));
    CHECK(cli(p, g + "filter --manifest syn/manifest.json --keep 0.5 --out f/scores.jsonl") == 0);
    CHECK(fs::exists(p / "f/run_manifest.filter.json"));
    CHECK(cli(p, g + "extract-bbox --manifest syn/manifest.json --scores f/scores.jsonl "
                     "--out f/pseudo.jsonl") == 0);
    const auto pseudo = read_boxes(p / "f/pseudo.jsonl");
    CHECK(pseudo.size() == 6);  // ceil(0.5 * 11 train samples)

    REQUIRE(cli(p, g + "train-detector --manifest syn/manifest.json --pseudo f/pseudo.jsonl "
                       "--iters 20 --out det") == 0);
    CHECK(fs::exists(p / "det/teacher.json"));
    CHECK(cli(p, g + "detect --manifest syn/manifest.json --checkpoint det/teacher.json "
                     "--out d/dets.jsonl") == 0);
    CHECK(read_boxes(p / "d/dets.jsonl").size() == 5);
    CHECK(cli(p, g + "expand --manifest syn/manifest.json --dets d/dets.jsonl --ratio 0.1 "
                     "--phi fixed:0.5 --out d/prompts.jsonl") == 0);
    CHECK(cli(p, g + "segment --manifest syn/manifest.json --prompts d/prompts.jsonl "
                     "--backend mock --out masks") == 0);
    CHECK(cli(p, g + "eval --gt syn/manifest.json --pred-masks masks --dets d/dets.jsonl "
                     "--out e/report.json --csv e/rows.csv --svg e/hist.svg") == 0);
    const auto rep = nlohmann::json::parse(fsutil::read_file(p / "e/report.json"));
    CHECK(rep["per_sample"].size() == 5);
    CHECK(rep.contains("detection"));
    CHECK(fs::exists(p / "e/run_manifest.eval.json"));
    CHECK(fs::exists(p / "e/hist.svg"));

    CHECK(cli(p, g + "perturb-study --manifest syn/manifest.json --ratios -0.1,0.1 "
                     "--out e/perturb.json") == 0);
    const auto ps = nlohmann::json::parse(fsutil::read_file(p / "e/perturb.json"));
    CHECK(ps.dump().find("0.1") != std::string::npos);
  }

  TEST_CASE("validation failures exit 1, missing inputs and runtime failures exit 2") {
    testutil::TempDir d("cli_err");
    const fs::path p = d.path();
    fsutil::write_file_atomic(p / "cfg.json", kSmallConfig);
    REQUIRE(cli(p, "--config cfg.json gen-synthetic --n 6 --seed 1 --out syn") == 0);

    // Empty prediction directory: every sample lacks a mask.
    fs::create_directories(p / "empty");
    CHECK(cli(p, "eval --gt syn/manifest.json --pred-masks empty --split all") == 1);
    CHECK(log_of(p).find("syn_00000") != std::string::npos);

    fsutil::write_file_atomic(p / "bad.json", R"({"filter": {"keep_fraction": 7}})");
    CHECK(cli(p, "--config bad.json filter --manifest syn/manifest.json") == 1);
    fsutil::write_file_atomic(p / "typo.json", R"({"filtr": {}})");
    CHECK(cli(p, "--config typo.json filter --manifest syn/manifest.json") == 1);
    fsutil::write_file_atomic(p / "broken.json", "{\"samples\": 3}");
    CHECK(cli(p, "filter --manifest broken.json") == 1);

    // External runner that never answers: per-sample timeouts.
    const auto ds = read_manifest(p / "syn/manifest.json");
    std::vector<BoxRecord> prompts{{ds.samples[0].sample_id, {0, 0, 10, 10}, std::nullopt}};
    write_boxes(p / "prompts.jsonl", prompts);
    CHECK(cli(p, "segment --manifest syn/manifest.json --prompts prompts.jsonl --backend external "
                 "--exchange-dir ex --timeout 0.2 --out m") == 2);
    CHECK(fsutil::read_file(p / "m/errors.jsonl").find("timeout") != std::string::npos);
  }

  TEST_CASE("pipeline subcommand generates data when no manifest is given") {
    testutil::TempDir d("cli_pipe");
    const fs::path p = d.path();
    fsutil::write_file_atomic(p / "cfg.json", R"({
      "data": {"synthetic": {"n_samples": 16, "image_h": 64, "image_w": 64,
                             "grid": {"rows": 16, "cols": 16, "channels": 1}}},
      "detector": {"pool_radii": [2], "iters": 20},
      "semisup": {"burn_in_iters": 10, "batch_labeled": 2, "batch_unlabeled": 2}
    })");
    CHECK(cli(p, "--config cfg.json pipeline --out run") == 0);
    CHECK(fs::exists(p / "run/data/manifest.json"));
    CHECK(fs::exists(p / "run/eval_report.json"));
    CHECK(fs::exists(p / "run/run_manifest.pipeline.json"));
    CHECK(cli(p, "--config cfg.json pipeline --manifest run/data/manifest.json --no-detector "
                 "--out direct") == 0);
    const auto rep = nlohmann::json::parse(fsutil::read_file(p / "direct/eval_report.json"));
    CHECK(rep["config"]["detector"]["enabled"] == false);
  }
}
