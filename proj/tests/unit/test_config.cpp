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
#include "ppboost/config.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"

using namespace ppboost;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults validate and round trip through JSON") {
    const PipelineConfig c = default_config();
    CHECK_NOTHROW(c.validate());
    const json j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
    CHECK(j["expand"]["ratio"] == 0.1);
    CHECK(j["filter"]["keep_fraction"] == 0.3);
  }

  TEST_CASE("partial documents override only what they name") {
    const auto c = config_from_json(json::parse(R"({
      "filter": {"keep_fraction": 0.5},
      "expand": {"phi": 0.25},
      "data": {"synthetic": {"n_samples": 7, "noise_sigma_range": [0.5, 1.0]}}
    })"));
    CHECK(c.filter.keep_fraction == 0.5);
    CHECK(c.expand.phi_mode == boxgeom::PhiMode::kFixed);
    CHECK(c.expand.phi == 0.25);
    CHECK(c.data.synthetic.n_samples == 7);
    CHECK(c.data.synthetic.noise_sigma_range[1] == 1.0);
    CHECK(c.confmap.tau_low == default_config().confmap.tau_low);
    CHECK(config_from_json(json::parse(R"({"expand": {"phi": "median"}})")).expand.phi_mode ==
          boxgeom::PhiMode::kMedian);
  }

  TEST_CASE("unknown keys, wrong types and bad enums are rejected") {
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"filtr": {}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"filter": {"keep": 0.3}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"filter": {"keep_fraction": "x"}})")),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"filter": {"mode": "top"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"expand": {"phi": "mean"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"segment": {"backend": "sam"}})")),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]")), ConfigError);
  }

  TEST_CASE("out-of-range values fail validation") {
    auto c = default_config();
    c.filter.keep_fraction = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = default_config();
    c.expand.ratio = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("presets") {
    CHECK(config_to_json(preset("desk")) == config_to_json(default_config()));
    CHECK(preset("full").train.iters > default_config().train.iters);
    CHECK_THROWS_AS(preset("huge"), ConfigError);
  }

  TEST_CASE("hash ignores the output directory only") {
    auto a = default_config();
    auto b = a;
    b.data.out_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 64);
    b.expand.ratio = 0.2;
    CHECK(config_hash(a) != config_hash(b));
  }

  TEST_CASE("load_config reads files and reports parse errors") {
    testutil::TempDir d("cfg");
    fsutil::write_file_atomic(d / "ok.json", R"({"expand": {"ratio": 0.2}})");
    CHECK(load_config(d / "ok.json").expand.ratio == 0.2);
    fsutil::write_file_atomic(d / "bad.json", "{not json");
    CHECK_THROWS_AS(load_config(d / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(d / "missing.json"), ValidationError);
  }
}
