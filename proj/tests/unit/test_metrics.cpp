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
#include "oracles.hpp"
#include "ppboost/boxgeom.hpp"
#include "ppboost/error.hpp"
#include "ppboost/metrics.hpp"

using namespace ppboost;
using namespace ppboost::metrics;

namespace {

Mask rect_mask(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0, std::size_t r1,
               std::size_t c1) {
  Mask m(h, w);
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) m.at(r, c) = 1;
  return m;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("dice basics") {
    const Mask a = rect_mask(8, 8, 1, 1, 5, 5);
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(Mask(8, 8), Mask(8, 8)) == 1.0);
    CHECK(dice(a, Mask(8, 8)) == 0.0);
    const Mask b = rect_mask(8, 8, 1, 3, 5, 7);  // overlap 8 of 16 + 16
    CHECK(dice(a, b) == 0.5);
    CHECK_THROWS_AS(dice(a, Mask(4, 8)), ShapeError);
  }

  TEST_CASE("dice is symmetric, bounded and matches the oracle") {
    std::mt19937_64 g(51);
    for (int t = 0; t < 200; ++t) {
      const Mask a = testutil::random_mask(g, 1 + g() % 20, 1 + g() % 20, 0.3);
      const Mask b = testutil::random_mask(g, a.height(), a.width(), 0.3);
      const double d = dice(a, b);
      CHECK(d == dice(b, a));
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      CHECK(std::abs(d - oracle::dice(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("boundary of a filled rectangle is its rim") {
    const Mask b = boundary(rect_mask(6, 6, 1, 1, 5, 5));
    CHECK(b.count() == 12);
    CHECK(b.at(2, 2) == 0);
    CHECK(b.at(1, 1) == 1);
    // Touching the image edge counts as boundary.
    CHECK(boundary(Mask(3, 3, 1)).count() == 8);
  }

  TEST_CASE("distance transform matches brute force") {
    std::mt19937_64 g(52);
    for (int t = 0; t < 50; ++t) {
      const Mask m = testutil::random_mask(g, 1 + g() % 15, 1 + g() % 15, 0.1);
      const auto d = squared_distance_transform(m);
      for (std::size_t r = 0; r < m.height(); ++r)
        for (std::size_t c = 0; c < m.width(); ++c) {
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < m.height(); ++i)
            for (std::size_t j = 0; j < m.width(); ++j)
              if (m.at(i, j)) {
                const double dr = double(r) - double(i), dc = double(c) - double(j);
                best = std::min(best, dr * dr + dc * dc);
              }
          CHECK(d[r * m.width() + c] == best);
        }
    }
  }

  TEST_CASE("nsd: identical masks give one; empties") {
    const Mask a = rect_mask(10, 10, 2, 2, 7, 8);
    CHECK(nsd(a, a, {}) == 1.0);
    CHECK(nsd(Mask(5, 5), Mask(5, 5), {}) == 1.0);
    CHECK(nsd(a, Mask(10, 10), {}) == 0.0);
    CHECK_THROWS_AS((NsdConfig{.tolerance_px = -1}.validate()), ConfigError);
  }

  TEST_CASE("nsd matches the oracle and is monotone in tolerance") {
    std::mt19937_64 g(53);
    for (int t = 0; t < 100; ++t) {
      const Mask a = testutil::random_mask(g, 4 + g() % 12, 4 + g() % 12, 0.5);
      const Mask b = testutil::random_mask(g, a.height(), a.width(), 0.5);
      double prev = -1;
      for (double tol : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
        const double v = nsd(a, b, {tol});
        CHECK(std::abs(v - oracle::nsd(a, b, tol)) <= 1e-12);
        CHECK(v >= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("single detection at IoU 0.9 gives AP50 = AP75 = 1") {
    const BBox gt{0, 0, 10, 10};
    const BBox det{0, 0, 9, 10};
    REQUIRE(boxgeom::iou(gt, det) == doctest::Approx(0.9));
    const auto r = average_precision({{"a", {det, 0.8}}}, {{"a", gt}}, coco_thresholds());
    CHECK(r.at(0.5) == 1.0);
    CHECK(r.at(0.75) == 1.0);
    CHECK(r.at(0.95) == 0.0);
    CHECK(r.thresholds.size() == 10);
    CHECK_FALSE(r.at(0.52).has_value());
  }

  TEST_CASE("AP ranking: a false positive ahead of a hit halves precision") {
    const std::vector<GroundTruth> gts{{"a", {0, 0, 10, 10}}, {"b", {0, 0, 10, 10}}};
    const std::vector<ScoredBox> dets{{"a", {{50, 50, 5, 5}, 0.9}}, {"b", {{0, 0, 10, 10}, 0.8}}};
    // Recall 0.5 reached at precision 0.5.
    CHECK(average_precision(dets, gts, {0.5}).ap[0] == 0.25);
    CHECK_THROWS_AS(average_precision(dets, {}, {0.5}), ValidationError);
  }

  TEST_CASE("AP matches the oracle and ignores uniform score scaling") {
    std::mt19937_64 g(54);
    for (int t = 0; t < 100; ++t) {
      std::vector<GroundTruth> gts;
      std::vector<ScoredBox> dets;
      const int n = 1 + static_cast<int>(g() % 8);
      for (int i = 0; i < n; ++i) {
        const std::string id = "s" + std::to_string(i);
        const BBox gt = testutil::random_box(g, 40);
        gts.push_back({id, gt});
        for (int k = 0, m = static_cast<int>(g() % 3); k < m; ++k) {
          BBox d = gt;
          d.x += std::normal_distribution<double>(0, 3)(g);
          d.w *= std::exp(std::normal_distribution<double>(0, 0.2)(g));
          // Coarse scores force ties.
          dets.push_back({id, {d, std::floor(std::uniform_real_distribution<double>(0, 5)(g)) / 5}});
        }
      }
      const auto r = average_precision(dets, gts, coco_thresholds());
      for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
        CHECK(std::abs(r.ap[i] - oracle::average_precision(dets, gts, r.thresholds[i])) <= 1e-12);
      }
      auto scaled = dets;
      for (auto& d : scaled) d.det.score *= 0.37;
      CHECK(average_precision(scaled, gts, coco_thresholds()).ap == r.ap);
    }
  }

  TEST_CASE("report aggregation and encodings") {
    auto r = make_report({{"b", 0.5, 0.25}, {"a", 1.0, 0.75}}, {2.0});
    CHECK(r.per_sample[0].sample_id == "a");
    CHECK(r.mdsc == 0.75);
    CHECK(r.mnsd == 0.5);
    const auto j = report_to_json(r);
    CHECK(j["aggregates"]["mDSC"] == 0.75);
    CHECK(j["per_sample"].size() == 2);
    const std::string csv = report_csv(r);
    CHECK(csv.rfind("sample_id,dice,nsd\n", 0) == 0);
    CHECK(csv.find("a,1,0.75\n") != std::string::npos);
    const std::string svg = report_svg(r);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
}
