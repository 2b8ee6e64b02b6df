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
#include "ppboost/boxgeom.hpp"
#include "ppboost/detector.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/metrics.hpp"
#include "ppboost/semisup.hpp"
#include "ppboost/synthgen.hpp"

using namespace ppboost;
using namespace ppboost::detector;

namespace {

// Stem channel count must be a multiple of 1 + |radii|.
std::vector<int> radii_for(std::size_t channels) {
  if (channels % 3 == 0) return {1, 2};
  if (channels % 2 == 0) return {3};
  return {};
}

DetectorParams random_params(std::mt19937_64& g, std::size_t channels, int k, double scale) {
  DetectorParams p(channels, k, 3.0, radii_for(channels));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& w : p.flat()) w = n(g);
  return p;
}

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::vector<semisup::TrainImage> noiseless_images(std::size_t first, std::size_t n) {
  synth::SynthConfig cfg;
  cfg.noise_sigma_range = {0.0, 0.0};
  cfg.distractor_prob = 0.0;
  cfg.seed = {99};
  std::vector<semisup::TrainImage> out;
  for (std::size_t i = first; i < first + n; ++i) {
    auto s = synth::generate_sample(cfg, i, Split::kTrain, "p");
    out.push_back({s.record.sample_id, s.features, cfg.image_h, cfg.image_w, {s.gt_box}});
  }
  return out;
}

}  // namespace

TEST_SUITE("detector") {
  TEST_CASE("delta encoding identities") {
    const BBox a{10, 20, 30, 40};
    const Deltas d = encode_deltas(a, a);
    CHECK(d.tx == 0.0);
    CHECK(d.ty == 0.0);
    CHECK(d.tw == 0.0);
    CHECK(d.th == 0.0);
    std::mt19937_64 g(31);
    for (int t = 0; t < 100; ++t) {
      const BBox gt = testutil::random_box(g, 100), anchor = testutil::random_box(g, 100);
      const BBox back = decode_deltas(encode_deltas(gt, anchor), anchor);
      CHECK(back.x == doctest::Approx(gt.x).epsilon(1e-9));
      CHECK(back.w == doctest::Approx(gt.w).epsilon(1e-9));
    }
    CHECK_THROWS_AS(encode_deltas({0, 0, 0, 1}, a), NumericDomainError);
  }

  TEST_CASE("decoding clips extreme size deltas") {
    const BBox anchor{0, 0, 16, 16};
    const BBox b = decode_deltas({0, 0, 50.0, -50.0}, anchor);
    CHECK(b.w == doctest::Approx(1000.0));
    CHECK(b.h == doctest::Approx(16.0 * 16.0 / 1000.0));
  }

  TEST_CASE("zero weights give one half and the anchors") {
    const DetectorParams p(6, 3, 3.0, {2, 4});
    const AnchorGrid anchors(4, 6, 32, 48, 3.0);
    std::mt19937_64 g(32);
    const auto dets = forward(testutil::random_grid(g, {4, 6, 6}), p, anchors);
    REQUIRE(dets.size() == 24);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      CHECK(dets[i].score == 0.5);
      CHECK(dets[i].box == anchors.anchor(i / 6, i % 6));
    }
  }

  TEST_CASE("large bias gives scores near one and the anchors") {
    DetectorParams p(1, 1, 3.0, {});
    p.obj()[p.window_len() - 1] = 50.0;
    const AnchorGrid anchors(2, 2, 8, 8, 3.0);
    for (const auto& d : forward(GridMap({2, 2, 1}, 0.3), p, anchors)) {
      CHECK(d.score == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(forward(GridMap({2, 2, 1}), p, anchors)[3].box == anchors.anchor(1, 1));
  }

  TEST_CASE("hand-built 1x1 model") {
    // C=1, k=1: z = w0 * x + b. x=2, obj (0.5, -0.3) -> z=0.7; tw weights (0.1, 0) -> tw=0.2.
    DetectorParams p(1, 1, 3.0, {});
    p.obj()[0] = 0.5;
    p.obj()[1] = -0.3;
    p.box(2)[0] = 0.1;
    p.box(3)[1] = -0.5;
    const AnchorGrid anchors(1, 1, 10, 10, 3.0);
    const auto d = forward(GridMap({1, 1, 1}, 2.0), p, anchors)[0];
    CHECK(d.score == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-15));
    const BBox a = anchors.anchor(0, 0);
    CHECK(d.box.w == doctest::Approx(a.w * std::exp(0.2)).epsilon(1e-15));
    CHECK(d.box.h == doctest::Approx(a.h * std::exp(-0.5)).epsilon(1e-15));
    CHECK(d.box.cx() == doctest::Approx(a.cx()).epsilon(1e-15));
  }

  TEST_CASE("sgd step arithmetic") {
    DetectorParams p(1, 1, 3.0, {}), g(1, 1, 3.0, {});
    for (auto& v : p.flat()) v = 1.0;
    for (auto& v : g.flat()) v = 1.0;
    const auto q = sgd_step(p, g, 0.1);
    for (double v : q.flat()) CHECK(v == doctest::Approx(0.9));
    CHECK(sgd_step(p, g, 0.0) == p);
  }

  TEST_CASE("empty labels: all-negative BCE, no box gradient") {
    std::mt19937_64 g(37);
    const auto p = random_params(g, 3, 3, 0.1);
    const GridMap input = testutil::random_grid(g, {5, 5, 3});
    const auto lg = supervised_loss_and_grad(input, {}, p, AnchorGrid(5, 5, 20, 20, 3.0), {});
    CHECK(lg.reg_loss == 0.0);
    for (int j = 0; j < 4; ++j)
      for (double v : lg.grad.box(j)) CHECK(v == 0.0);
  }

  TEST_CASE("all-zero params: top-1 is the first cell") {
    const DetectorParams p(1, 3, 3.0, {});
    const AnchorGrid anchors(3, 3, 12, 12, 3.0);
    const auto d = infer_top1(GridMap({3, 3, 1}), p, anchors, 0.7);
    REQUIRE(d.has_value());
    CHECK(d->box == anchors.anchor(0, 0));
    CHECK_FALSE(infer_top1(GridMap({3, 3, 1}), p, anchors, 0.7, 0.6).has_value());
  }

  TEST_CASE("forward checks shapes") {
    const DetectorParams p(3, 3, 3.0, {2});
    CHECK_THROWS_AS(forward(GridMap({4, 4, 2}), p, AnchorGrid(4, 4, 16, 16, 3.0)), ShapeError);
    CHECK_THROWS_AS(forward(GridMap({4, 4, 3}), p, AnchorGrid(5, 4, 16, 16, 3.0)), ShapeError);
  }

  TEST_CASE("exact boxes give zero regression loss; saturated negatives hit the BCE floor") {
    const AnchorGrid anchors(4, 4, 32, 32, 3.0);
    const GridMap input({4, 4, 1}, 0.0);
    DetectorParams p(1, 1, 3.0, {});
    // Single cell, label equal to its anchor: zero deltas are exact.
    const AnchorGrid one(1, 1, 8, 8, 3.0);
    const BBox label = one.anchor(0, 0);
    const auto lg = supervised_loss_and_grad(GridMap({1, 1, 1}), std::span(&label, 1), p, one, {});
    CHECK(lg.positives == 1);
    CHECK(lg.reg_loss == 0.0);
    // All-negative image: with bias -40 every cell is confidently background.
    p.obj()[p.window_len() - 1] = -40.0;
    const auto neg = supervised_loss_and_grad(input, {}, p, anchors, {});
    CHECK(neg.positives == 0);
    CHECK(neg.cls_loss < 1e-16);
  }

  TEST_CASE("zero gradient leaves parameters unchanged") {
    std::mt19937_64 g(33);
    const auto p = random_params(g, 3, 3, 1.0);
    const DetectorParams zero(3, 3, 3.0, radii_for(3));
    CHECK(sgd_step(p, zero, 0.1) == p);
  }

  TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 g(34);
    for (int t = 0; t < 30; ++t) {
      const std::size_t rows = 3 + g() % 4, cols = 3 + g() % 4, ch = 1 + g() % 3;
      const int k = (g() % 2) ? 3 : 1;
      const GridMap input = testutil::random_grid(g, {rows, cols, ch}, -1, 1);
      const AnchorGrid anchors(rows, cols, rows * 8, cols * 8, 2.0);
      std::vector<BBox> labels;
      for (std::size_t i = 0, n = 1 + g() % 2; i < n; ++i) labels.push_back(testutil::random_box(g, 8.0 * rows));
      for (auto& l : labels) l.w = std::max(l.w, 2.0), l.h = std::max(l.h, 2.0);
      const auto p = random_params(g, ch, k, 0.05);
      for (double reg_weight : {0.0, 1.0}) {
        const TrainConfig cfg{.reg_weight = reg_weight};
        const auto lg = supervised_loss_and_grad(input, labels, p, anchors, cfg);
        std::vector<double> fd(p.flat().size());
        const double h = 1e-4;
        for (std::size_t i = 0; i < fd.size(); ++i) {
          DetectorParams a = p, b = p;
          a.flat()[i] += h;
          b.flat()[i] -= h;
          fd[i] = (supervised_loss_and_grad(input, labels, a, anchors, cfg).loss -
                   supervised_loss_and_grad(input, labels, b, anchors, cfg).loss) /
                  (2 * h);
        }
        std::vector<double> diff(fd.size());
        for (std::size_t i = 0; i < fd.size(); ++i) diff[i] = lg.grad.flat()[i] - fd[i];
        const double scale = std::max(max_abs(fd), max_abs(lg.grad.flat()));
        CHECK(max_abs(diff) <= 1e-4 * std::max(scale, 1e-8));
      }
    }
  }

  TEST_CASE("forward commutes with horizontal flips") {
    std::mt19937_64 g(35);
    for (int t = 0; t < 50; ++t) {
      const std::size_t rows = 4 + g() % 5, cols = 4 + g() % 5;
      const std::size_t img_w = cols * 4;
      const GridMap raw = testutil::random_grid(g, {rows, cols, 2});
      DetectorParams p(6, 3, 3.0, {1, 3});
      std::normal_distribution<double> n(0.0, 0.3);
      for (auto& w : p.flat()) w = n(g);
      const AnchorGrid anchors(rows, cols, rows * 4, img_w, 3.0);
      const auto a = forward(build_input(raw, p.pool_radii()), p, anchors);
      const auto b = forward(build_input(semisup::flip_grid(raw), p.pool_radii()), p, anchors);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const auto& x = a[r * cols + c];
          const auto& y = b[r * cols + (cols - 1 - c)];
          const BBox fy = semisup::flip_box(y.box, img_w);
          CHECK(std::abs(x.score - y.score) <= 1e-6);
          CHECK(std::abs(x.box.x - fy.x) <= 1e-6);
          CHECK(std::abs(x.box.y - fy.y) <= 1e-6);
          CHECK(std::abs(x.box.w - fy.w) <= 1e-6);
          CHECK(std::abs(x.box.h - fy.h) <= 1e-6);
        }
    }
  }

  TEST_CASE("stem box means") {
    // Edge-replicated box mean of a ramp.
    GridMap raw({1, 4, 1}, std::vector<double>{0, 1, 2, 3});
    const int radius[] = {1};
    const GridMap s = build_input(raw, radius);
    REQUIRE(s.channels() == 2);
    CHECK(s.at(0, 0, 1) == doctest::Approx((0 + 0 + 1) / 3.0));
    CHECK(s.at(0, 1, 1) == doctest::Approx(1.0));
    CHECK(s.at(0, 3, 1) == doctest::Approx((2 + 3 + 3) / 3.0));
  }

  TEST_CASE("cell assignment") {
    const AnchorGrid anchors(4, 4, 32, 32, 2.0);
    // Tiny box: no anchor reaches the IoU bar, so the nearest cell is used.
    const BBox tiny{13, 13, 1, 1};
    const auto a = assign_cells(anchors, std::span(&tiny, 1), 0.5);
    CHECK(std::count(a.begin(), a.end(), 0) >= 1);
    CHECK(a[1 * 4 + 1] == 0);
    CHECK(std::count(a.begin(), a.end(), -1) + std::count(a.begin(), a.end(), 0) == 16);
  }

  TEST_CASE("checkpoint round trip is byte exact") {
    testutil::TempDir dir("ckpt");
    std::mt19937_64 g(36);
    const auto p = random_params(g, 4, 3, 1.0);
    write_checkpoint(dir / "a.json", p, {123, 7});
    CheckpointMeta meta;
    const auto back = read_checkpoint(dir / "a.json", &meta);
    CHECK(back == p);
    CHECK(meta.iters == 123);
    CHECK(meta.seed == 7);
    write_checkpoint(dir / "b.json", back, meta);
    CHECK(fsutil::read_file(dir / "a.json") == fsutil::read_file(dir / "b.json"));
    fsutil::write_file_atomic(dir / "bad.json", "{\"k\": 3}");
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.json"), ParseError);
  }

  TEST_CASE("config validation") {
    CHECK_THROWS_AS((DetectorConfig{.k = 2}.validate()), ConfigError);
    CHECK_THROWS_AS((TrainConfig{.lr = 0}.validate()), ConfigError);
    CHECK_THROWS_AS((TrainConfig{.momentum = 1.0}.validate()), ConfigError);
  }

  TEST_CASE("single blob: trained detector finds the object") {
    auto train = noiseless_images(0, 40);
    semisup::SemiSupConfig scfg;
    scfg.unsup_weight = 0.0;
    scfg.burn_in_iters = 300;
    const TrainConfig tcfg{.iters = 300};
    const DetectorConfig dcfg;
    const auto res = semisup::train_semisup(train, {}, dcfg, scfg, tcfg);
    const auto test = noiseless_images(1000, 10);
    const auto dets = semisup::predict_top1(test, res.teacher, dcfg);
    double mean_iou = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      REQUIRE(dets[i].has_value());
      mean_iou += boxgeom::iou(dets[i]->box, test[i].boxes[0]) / test.size();
    }
    CHECK(mean_iou > 0.3);
  }

  TEST_CASE("noiseless learnability: loss falls window to window and AP50 >= 0.9") {
    auto train = noiseless_images(0, 200);
    semisup::SemiSupConfig scfg;
    scfg.unsup_weight = 0.0;
    scfg.burn_in_iters = 2000;
    const TrainConfig tcfg{.iters = 2000};
    const DetectorConfig dcfg;
    const auto res = semisup::train_semisup(train, {}, dcfg, scfg, tcfg);
    std::vector<double> windows;
    for (std::size_t start = 0; start < res.log.size(); start += 100) {
      double s = 0;
      for (std::size_t i = start; i < start + 100; ++i) s += res.log[i].l_sup;
      windows.push_back(s / 100);
    }
    for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] < windows[i - 1]);
    const auto test = noiseless_images(5000, 100);
    const auto dets = semisup::predict_top1(test, res.student, dcfg);
    std::vector<metrics::ScoredBox> scored;
    std::vector<metrics::GroundTruth> gts;
    for (std::size_t i = 0; i < test.size(); ++i) {
      gts.push_back({test[i].sample_id, test[i].boxes[0]});
      if (dets[i]) scored.push_back({test[i].sample_id, *dets[i]});
    }
    const auto ap = metrics::average_precision(scored, gts, {0.5});
    MESSAGE("noiseless AP50 = " << ap.ap[0]);
    CHECK(ap.ap[0] >= 0.9);
  }
}
