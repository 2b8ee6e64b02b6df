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

#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/error.hpp"
#include "ppboost/npy.hpp"

using namespace ppboost;
using namespace ppboost::confmap;

TEST_SUITE("confmap") {
  TEST_CASE("cosine logits: patches equal to the prompt give 1") {
    GridMap f({3, 4, 3});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        f.at(r, c, 0) = 0.2;
        f.at(r, c, 1) = -1.0;
        f.at(r, c, 2) = 4.0;
      }
    const GridMap s = cosine_logits(f, {"p", {0.2, -1.0, 4.0}});
    CHECK(s.channels() == 1);
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("cosine logits oracle value") {
    GridMap f({1, 1, 3}, std::vector<double>{1, 2, 2});
    // 4 / (3 * sqrt 5), frozen with mpmath.
    CHECK(std::abs(cosine_logits(f, {"p", {2, 0, 1}}).at(0, 0) - 0.5962847939999439) < 1e-15);
  }

  TEST_CASE("cosine logits domain errors") {
    GridMap f({1, 2, 2}, std::vector<double>{1, 0, 0, 0});
    CHECK_THROWS_AS(cosine_logits(f, {"p", {0, 0}}), NumericDomainError);
    CHECK_THROWS_AS(cosine_logits(f, {"p", {1, 0}}), NumericDomainError);
    CHECK_THROWS_AS(cosine_logits(f, {"p", {1, 0, 0}}), ShapeError);
  }

  TEST_CASE("softmax of uniform logits is uniform") {
    for (double tau : {0.01, 0.5, 1.0, 7.0}) {
      const GridMap s = softmax_map(GridMap({4, 5, 1}, 2.5), tau);
      for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 20).epsilon(1e-15));
    }
  }

  TEST_CASE("softmax oracle value") {
    // [0, 1] at tau 0.1, frozen with mpmath.
    const GridMap s = softmax_map(GridMap({1, 2, 1}, std::vector<double>{0.0, 1.0}), 0.1);
    CHECK(std::abs(s.at(0, 0) - 4.539786870243439e-05) < 1e-15);
    CHECK(std::abs(s.at(0, 1) - 0.9999546021312976) < 1e-15);
  }

  TEST_CASE("softmax sums to one and is shift invariant") {
    std::mt19937_64 g(1);
    for (int t = 0; t < 100; ++t) {
      const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2, 3)(g));
      GridMap l = testutil::random_grid(g, {6, 7, 1}, -scale, scale);
      const double tau = std::uniform_real_distribution<double>(0.05, 2.0)(g);
      const GridMap a = softmax_map(l, tau);
      CHECK(std::abs(a.sum() - 1.0) <= 1e-6);
      for (auto& v : l.values()) v += 123.0;
      const GridMap b = softmax_map(l, tau);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a.values()[i] - b.values()[i]) <= 1e-9);
      }
    }
  }

  TEST_CASE("zero logits give one half at both temperatures") {
    const auto m = sigmoid_maps(GridMap({3, 3, 1}, 0.0), {});
    for (double v : m.low.values()) CHECK(v == 0.5);
    for (double v : m.high.values()) CHECK(v == 0.5);
  }

  TEST_CASE("sigmoid maps are monotone in logits") {
    std::mt19937_64 g(2);
    for (int t = 0; t < 50; ++t) {
      GridMap a = testutil::random_grid(g, {5, 5, 1}, -50, 50);
      GridMap b = a;
      for (auto& v : b.values()) v += std::uniform_real_distribution<double>(0, 3)(g);
      const auto ma = sigmoid_maps(a, {}), mb = sigmoid_maps(b, {});
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(ma.low.values()[i] <= mb.low.values()[i]);
        CHECK(ma.high.values()[i] <= mb.high.values()[i]);
      }
    }
  }

  TEST_CASE("normalize distribution") {
    const GridMap p = normalize_distribution(GridMap({1, 3, 1}, std::vector<double>{1, 1, 2}), 1e-12);
    CHECK(p.at(0, 0) == 0.25);
    CHECK(p.at(0, 1) == 0.25);
    CHECK(p.at(0, 2) == 0.5);
  }

  TEST_CASE("kl identity and non-negativity") {
    std::mt19937_64 g(3);
    for (int t = 0; t < 200; ++t) {
      const GridMap p = normalize_distribution(testutil::random_grid(g, {4, 4, 1}, 0, 1), 1e-12);
      const GridMap q = normalize_distribution(testutil::random_grid(g, {4, 4, 1}, 0, 1), 1e-12);
      CHECK(kl_divergence(p, p) == 0.0);
      CHECK(kl_divergence(p, q) >= -1e-9);
    }
  }

  TEST_CASE("stability kl oracle value") {
    const GridMap l({2, 2, 1}, std::vector<double>{0, 1, 2, -1});
    // Frozen with mpmath at tau_low 0.1, tau_high 1, eps 1e-12.
    CHECK(std::abs(stability_kl(l, {}) - 0.12703889403172252) < 1e-12);
  }

  TEST_CASE("percentile filter keeps the lowest scores") {
    std::vector<ScoredSample> s;
    for (int i = 1; i <= 10; ++i) s.push_back({"s" + std::to_string(i), static_cast<double>(i)});
    const auto out = apply_filter(s, {.keep_fraction = 0.3});
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].kept == (i < 3));
    CHECK(ceil_count(0.1, 10) == 1);
    CHECK(ceil_count(0.3, 7) == 3);
  }

  TEST_CASE("percentile ties break by sample id") {
    const auto out = apply_filter({{"b", 1.0}, {"a", 1.0}, {"c", 0.5}}, {.keep_fraction = 0.5});
    CHECK(out[0].kept == false);
    CHECK(out[1].kept == true);
    CHECK(out[2].kept == true);
  }

  TEST_CASE("absolute filter") {
    FilterConfig f{.mode = FilterMode::kAbsolute, .tau_kl = 2.0};
    const auto out = apply_filter({{"a", 1.0}, {"b", 2.0}, {"c", 2.5}}, f);
    CHECK(out[0].kept);
    CHECK(out[1].kept);
    CHECK_FALSE(out[2].kept);
  }

  TEST_CASE("filter is monotone in keep fraction") {
    std::mt19937_64 g(4);
    std::vector<ScoredSample> s;
    for (int i = 0; i < 97; ++i) {
      // Coarse values force ties.
      s.push_back({"id" + std::to_string(i), std::floor(std::uniform_real_distribution<double>(0, 10)(g))});
    }
    std::vector<StabilityScore> prev = apply_filter(s, {.keep_fraction = 0.01});
    for (double f = 0.05; f <= 1.0001; f += 0.05) {
      const auto cur = apply_filter(s, {.keep_fraction = std::min(f, 1.0)});
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (prev[i].kept) CHECK(cur[i].kept);
      }
      prev = cur;
    }
  }

  TEST_CASE("config validation") {
    CHECK_THROWS_AS((ConfMapConfig{.tau_low = 1.0, .tau_high = 0.5}.validate()), ConfigError);
    CHECK_THROWS_AS((ConfMapConfig{.tau_softmax = 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((FilterConfig{.keep_fraction = 1.5}.validate()), ConfigError);
    CHECK_NOTHROW(ConfMapConfig{}.validate());
  }

  TEST_CASE("scores file round trip") {
    testutil::TempDir dir("scores");
    const std::vector<StabilityScore> s{{"a", 0.25, true}, {"b", 1e-300, false}};
    write_scores(dir / "s.jsonl", s);
    CHECK(read_scores(dir / "s.jsonl") == s);
  }

  TEST_CASE("load_logits checks the declared grid") {
    testutil::TempDir dir("logits");
    npy::write_grid(dir / "l.npy", GridMap({3, 3, 1}));
    Dataset ds{dir.path(), {}};
    SampleRecord r;
    r.sample_id = "x";
    r.logits_path = "l.npy";
    r.grid = {3, 3, 1};
    CHECK(load_logits(ds, r).rows() == 3);
    r.grid = {4, 3, 1};
    CHECK_THROWS_AS(load_logits(ds, r), ShapeError);
  }
}
