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

#include "ppboost/semisup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ppboost/boxgeom.hpp"
#include "ppboost/confmap.hpp"
#include "ppboost/error.hpp"
#include "ppboost/parallel.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::semisup {

using detector::AnchorGrid;
using detector::DetectorParams;

void AugConfig::validate() const {
  if (!(hflip_p >= 0.0 && hflip_p <= 1.0)) throw ConfigError("aug.hflip_p must be in [0, 1]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("aug.noise_sigma must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("aug.dropout_p must be in [0, 1)");
}

void SemiSupConfig::validate() const {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw ConfigError("semisup.labeled_fraction must be in (0, 1]");
  }
  if (burn_in_iters < 0) throw ConfigError("semisup.burn_in_iters must be >= 0");
  if (!(unsup_weight >= 0.0)) throw ConfigError("semisup.unsup_weight must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("semisup.ema_decay must be in [0, 1)");
  if (!(pl_score_min >= 0.0 && pl_score_min <= 1.0)) {
    throw ConfigError("semisup.pl_score_min must be in [0, 1]");
  }
  if (!(pl_nms_iou > 0.0 && pl_nms_iou <= 1.0)) throw ConfigError("semisup.pl_nms_iou must be in (0, 1]");
  if (batch_labeled < 1 || batch_unlabeled < 1) throw ConfigError("semisup batch sizes must be >= 1");
  aug.validate();
}

DatasetSplit split_dataset(const std::vector<LabeledPair>& kept,
                           const std::vector<SampleRecord>& all_samples, double fraction,
                           RngSeed seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("labeled fraction must be in (0, 1]");
  std::set<std::string> all_ids;
  for (const auto& s : all_samples) all_ids.insert(s.sample_id);
  for (const auto& k : kept) {
    if (!all_ids.count(k.record.sample_id)) {
      throw ValidationError("kept sample '" + k.record.sample_id + "' is not in the dataset");
    }
  }
  const std::size_t n_lab = confmap::ceil_count(fraction, kept.size());
  if (n_lab == 0) throw ValidationError("need >= 1 labeled sample");

  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(split(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng.engine());
  order.resize(n_lab);
  std::sort(order.begin(), order.end());

  DatasetSplit out;
  std::set<std::string> labeled_ids;
  for (std::size_t i : order) {
    out.labeled.push_back(kept[i]);
    labeled_ids.insert(kept[i].record.sample_id);
  }
  for (const auto& s : all_samples) {
    if (!labeled_ids.count(s.sample_id)) out.unlabeled.push_back(s);
  }
  return out;
}

std::vector<BBox> teacher_pseudo_labels(const GridMap& input, const DetectorParams& teacher,
                                        const AnchorGrid& anchors, const SemiSupConfig& cfg) {
  // Thresholding before NMS keeps the same set: a box is only ever
  // suppressed by a higher-scoring one.
  auto dets = detector::forward(input, teacher, anchors);
  std::erase_if(dets, [&](const Detection& d) { return !(d.score >= cfg.pl_score_min); });
  std::vector<BBox> out;
  for (const auto& d : boxgeom::nms(dets, cfg.pl_nms_iou)) out.push_back(d.box);
  return out;
}

DetectorParams ema_update(const DetectorParams& teacher, const DetectorParams& student,
                          double alpha) {
  if (!teacher.same_shape(student)) throw ShapeError("ema_update: parameter shape mismatch");
  DetectorParams out = teacher;
  simd::kernels().axpby(alpha, student.flat().data(), 1.0 - alpha, out.flat().data(),
                        out.flat().size());
  return out;
}

GridMap flip_grid(const GridMap& g) {
  GridMap out(g.shape());
  const std::size_t cols = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t ch = 0; ch < g.channels(); ++ch) {
        out.at(r, cols - 1 - c, ch) = g.at(r, c, ch);
      }
    }
  }
  return out;
}

BBox flip_box(const BBox& b, std::size_t image_w) {
  return {static_cast<double>(image_w) - b.right(), b.y, b.w, b.h};
}

GridMap weak_view(const GridMap& raw, const AugDraw& d) {
  return d.flip ? flip_grid(raw) : raw;
}

GridMap strong_view(const GridMap& raw, const AugDraw& d, const AugConfig& cfg) {
  GridMap out = weak_view(raw, d);
  Rng rng(RngSeed{d.noise_seed});
  const std::size_t ch = out.channels();
  auto v = out.values();
  for (std::size_t cell = 0; cell < out.rows() * out.cols(); ++cell) {
    const bool drop = rng.bernoulli(cfg.dropout_p);
    for (std::size_t k = 0; k < ch; ++k) {
      const double noise = rng.normal(0.0, cfg.noise_sigma);
      v[cell * ch + k] = drop ? 0.0 : v[cell * ch + k] + noise;
    }
  }
  return out;
}

namespace {

// Epoch-style batches: walk a shuffled permutation and reshuffle when it
// runs out. A batch never repeats an index; items carried over an epoch
// boundary go to the back of the next epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, Rng& rng) : rng_(rng), perm_(n) {
    std::iota(perm_.begin(), perm_.end(), 0);
    shuffle();
  }

  std::vector<std::size_t> next(std::size_t k) {
    k = std::min(k, perm_.size());
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == perm_.size()) {
        shuffle();
        std::stable_partition(perm_.begin(), perm_.end(), [&](std::size_t i) {
          return std::find(out.begin(), out.end(), i) == out.end();
        });
      }
      out.push_back(perm_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = perm_.size(); i > 1; --i) std::swap(perm_[i - 1], perm_[rng_.below(i)]);
    pos_ = 0;
  }

  Rng& rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

std::vector<AugDraw> draw_augs(Rng& rng, std::size_t k, const AugConfig& aug) {
  std::vector<AugDraw> out(k);
  for (auto& d : out) {
    d.flip = rng.bernoulli(aug.hflip_p);
    d.noise_seed = rng.engine()();
  }
  return out;
}

struct Partial {
  bool used = false;
  double loss = 0.0;
  std::size_t n_pseudo = 0;
  DetectorParams grad;
};

std::vector<BBox> view_boxes(const std::vector<BBox>& boxes, const AugDraw& d,
                             std::size_t image_w) {
  if (!d.flip) return boxes;
  std::vector<BBox> out;
  for (const auto& b : boxes) out.push_back(flip_box(b, image_w));
  return out;
}

// Averages the used partials into (loss, grad); returns false if none.
bool reduce(const std::vector<Partial>& parts, const DetectorParams& like, double& loss,
            DetectorParams& grad) {
  grad = like;
  std::fill(grad.flat().begin(), grad.flat().end(), 0.0);
  loss = 0.0;
  std::size_t used = 0;
  for (const auto& p : parts) {
    if (!p.used) continue;
    ++used;
    loss += p.loss;
    simd::kernels().axpy(1.0, p.grad.flat().data(), grad.flat().data(), grad.flat().size());
  }
  if (used == 0) return false;
  const double inv = 1.0 / static_cast<double>(used);
  loss *= inv;
  for (auto& g : grad.flat()) g *= inv;
  return true;
}

}  // namespace

TrainResult train_semisup(const std::vector<TrainImage>& labeled,
                          const std::vector<TrainImage>& unlabeled,
                          const detector::DetectorConfig& dcfg, const SemiSupConfig& cfg,
                          const detector::TrainConfig& tcfg, std::size_t jobs,
                          const LogSink& sink) {
  dcfg.validate();
  cfg.validate();
  tcfg.validate();
  if (labeled.empty()) throw ValidationError("need >= 1 labeled sample");
  const std::size_t raw_ch = labeled.front().raw.channels();
  for (const auto* set : {&labeled, &unlabeled}) {
    for (const auto& im : *set) {
      if (im.raw.channels() != raw_ch) {
        throw ShapeError("sample '" + im.sample_id + "' has " +
                         std::to_string(im.raw.channels()) + " feature channels, expected " +
                         std::to_string(raw_ch));
      }
    }
  }

  TrainResult res;
  res.student = DetectorParams(raw_ch * (1 + dcfg.pool_radii.size()), dcfg.k,
                               dcfg.anchor_scale, dcfg.pool_radii);
  res.teacher = res.student;
  DetectorParams velocity = res.student;

  // Separate streams: the labeled branch draws the same numbers whether or
  // not the unlabeled branch runs.
  Rng lab_rng(split(cfg.seed, "labeled"));
  Rng unl_rng(split(cfg.seed, "unlabeled"));
  const bool use_unsup = cfg.unsup_weight > 0.0 && !unlabeled.empty();
  EpochSampler lab_batches(labeled.size(), lab_rng);
  EpochSampler unl_batches(unlabeled.size(), unl_rng);

  auto anchors_for = [&](const TrainImage& im) {
    return AnchorGrid(im.raw.rows(), im.raw.cols(), im.image_h, im.image_w, dcfg.anchor_scale);
  };

  for (int it = 1; it <= tcfg.iters; ++it) {
    LogEntry entry;
    entry.iter = it;

    const auto lidx = lab_batches.next(static_cast<std::size_t>(cfg.batch_labeled));
    const auto ldraw = draw_augs(lab_rng, lidx.size(), cfg.aug);
    std::vector<Partial> lparts(lidx.size());
    parallel_for(lidx.size(), jobs, [&](std::size_t j) {
      const auto& im = labeled[lidx[j]];
      const GridMap input =
          detector::build_input(strong_view(im.raw, ldraw[j], cfg.aug), dcfg.pool_radii);
      const auto boxes = view_boxes(im.boxes, ldraw[j], im.image_w);
      const auto windows = detector::gather_windows(
          input, dcfg.k, detector::channel_dilations(input.channels(), dcfg.pool_radii));
      auto lg = detector::loss_and_grad_windows(windows, boxes, res.student, anchors_for(im),
                                                tcfg);
      lparts[j] = {true, lg.loss, 0, std::move(lg.grad)};
    });
    DetectorParams grad;
    reduce(lparts, res.student, entry.l_sup, grad);

    if (use_unsup && it > cfg.burn_in_iters) {
      const auto uidx = unl_batches.next(static_cast<std::size_t>(cfg.batch_unlabeled));
      const auto udraw = draw_augs(unl_rng, uidx.size(), cfg.aug);
      std::vector<Partial> uparts(uidx.size());
      parallel_for(uidx.size(), jobs, [&](std::size_t j) {
        const auto& im = unlabeled[uidx[j]];
        const AnchorGrid anchors = anchors_for(im);
        const auto pseudo = teacher_pseudo_labels(
            detector::build_input(weak_view(im.raw, udraw[j]), dcfg.pool_radii), res.teacher,
            anchors, cfg);
        if (pseudo.empty()) return;
        const GridMap input =
            detector::build_input(strong_view(im.raw, udraw[j], cfg.aug), dcfg.pool_radii);
        const auto windows = detector::gather_windows(
          input, dcfg.k, detector::channel_dilations(input.channels(), dcfg.pool_radii));
        auto lg = detector::loss_and_grad_windows(windows, pseudo, res.student, anchors, tcfg);
        uparts[j] = {true, lg.loss, pseudo.size(), std::move(lg.grad)};
      });
      DetectorParams ugrad;
      if (reduce(uparts, res.student, entry.l_unsup, ugrad)) {
        simd::kernels().axpy(cfg.unsup_weight, ugrad.flat().data(), grad.flat().data(),
                             grad.flat().size());
      }
      for (const auto& p : uparts) entry.n_pseudo += p.n_pseudo;
    }

    if (!std::isfinite(entry.l_sup) || !std::isfinite(entry.l_unsup) || !grad.all_finite()) {
      std::ostringstream msg;
      msg << "training diverged at iter " << it << ": L_sup=" << entry.l_sup
          << " L_unsup=" << entry.l_unsup << " (try a smaller learning rate)";
      throw RuntimeError(msg.str());
    }

    simd::kernels().axpby(tcfg.momentum, grad.flat().data(), 1.0, velocity.flat().data(),
                          velocity.flat().size());
    res.student = detector::sgd_step(res.student, velocity, tcfg.lr);

    if (it == cfg.burn_in_iters) {
      res.teacher = res.student;
    } else if (it > cfg.burn_in_iters) {
      res.teacher = ema_update(res.teacher, res.student, cfg.ema_decay);
    }

    if (sink) sink(entry);
    res.log.push_back(entry);
  }
  // Burn-in never ended: there is no EMA trail yet.
  if (cfg.burn_in_iters >= tcfg.iters) res.teacher = res.student;
  return res;
}

std::string encode_log(const std::vector<LogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::json j;
    j["iter"] = e.iter;
    j["l_sup"] = e.l_sup;
    j["l_unsup"] = e.l_unsup;
    j["n_pseudo"] = e.n_pseudo;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::optional<Detection>> predict_top1(const std::vector<TrainImage>& images,
                                                   const DetectorParams& params,
                                                   const detector::DetectorConfig& dcfg,
                                                   std::size_t jobs) {
  std::vector<std::optional<Detection>> out(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) {
    const auto& im = images[i];
    const AnchorGrid anchors(im.raw.rows(), im.raw.cols(), im.image_h, im.image_w,
                             dcfg.anchor_scale);
    out[i] = detector::infer_top1(detector::build_input(im.raw, dcfg.pool_radii), params,
                                  anchors, dcfg.nms_iou, dcfg.min_score);
  });
  return out;
}

}  // namespace ppboost::semisup
