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

#include "ppboost/detector.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ppboost/boxgeom.hpp"
#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/manifest.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::detector {

namespace {

// Width/height deltas are clipped before exp() when decoding.
const double kDeltaClip = std::log(1000.0 / 16.0);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double smooth_l1(double e) {
  const double a = std::abs(e);
  return a < 1.0 ? 0.5 * e * e : a - 0.5;
}

inline double smooth_l1_grad(double e) {
  if (e >= 1.0) return 1.0;
  if (e <= -1.0) return -1.0;
  return e;
}

inline std::size_t clamp_index(long i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

// Index of the horizontally mirrored window tap.
std::vector<std::size_t> mirror_map(std::size_t channels, int k) {
  const std::size_t len = channels * k * k + 1;
  std::vector<std::size_t> m(len);
  for (int dy = 0; dy < k; ++dy) {
    for (int dx = 0; dx < k; ++dx) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t i = (static_cast<std::size_t>(dy * k + dx)) * channels + ch;
        const std::size_t j = (static_cast<std::size_t>(dy * k + (k - 1 - dx))) * channels + ch;
        m[i] = j;
      }
    }
  }
  m[len - 1] = len - 1;
  return m;
}

// Projects each of the five weight vectors onto its symmetry class.
void symmetrize(const DetectorParams& in, DetectorParams& out) {
  const auto m = mirror_map(in.channels(), in.k());
  auto project = [&](std::span<const double> src, std::span<double> dst, bool anti) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = anti ? 0.5 * (src[i] - src[m[i]]) : 0.5 * (src[i] + src[m[i]]);
    }
  };
  project(in.obj(), out.obj(), false);
  for (int j = 0; j < 4; ++j) project(in.box(j), out.box(j), j == 0);
}

}  // namespace

void DetectorConfig::validate() const {
  if (k < 1 || k % 2 == 0) throw ConfigError("detector.k must be a positive odd integer");
  if (!(anchor_scale > 0.0)) throw ConfigError("detector.anchor_scale must be > 0");
  for (int r : pool_radii) {
    if (r < 1) throw ConfigError("detector.pool_radii entries must be >= 1");
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("detector.nms_iou must be in (0, 1]");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("detector.lr must be > 0");
  if (iters < 1) throw ConfigError("detector.iters must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("detector.momentum must be in [0, 1)");
  if (!(pos_iou > 0.0 && pos_iou <= 1.0)) throw ConfigError("detector.pos_iou must be in (0, 1]");
  if (!(reg_weight >= 0.0)) throw ConfigError("detector.reg_weight must be >= 0");
}

DetectorParams::DetectorParams(std::size_t channels, int k, double anchor_scale,
                               std::vector<int> pool_radii)
    : channels_(channels),
      k_(k),
      anchor_scale_(anchor_scale),
      pool_radii_(std::move(pool_radii)) {
  if (channels_ == 0) throw ShapeError("detector needs at least one input channel");
  if (k_ < 1 || k_ % 2 == 0) throw ShapeError("detector window size must be odd");
  w_.assign(5 * window_len(), 0.0);
}

bool DetectorParams::all_finite() const {
  return std::all_of(w_.begin(), w_.end(), [](double v) { return std::isfinite(v); });
}

AnchorGrid::AnchorGrid(std::size_t rows, std::size_t cols, std::size_t image_h,
                       std::size_t image_w, double anchor_scale)
    : rows_(rows),
      cols_(cols),
      image_h_(image_h),
      image_w_(image_w),
      cell_w_(static_cast<double>(image_w) / static_cast<double>(cols)),
      cell_h_(static_cast<double>(image_h) / static_cast<double>(rows)),
      scale_(anchor_scale) {
  if (rows == 0 || cols == 0 || image_h == 0 || image_w == 0) {
    throw ShapeError("anchor grid dimensions must be positive");
  }
}

BBox AnchorGrid::anchor(std::size_t r, std::size_t c) const {
  const double w = scale_ * cell_w_;
  const double h = scale_ * cell_h_;
  return {center_x(c) - 0.5 * w, center_y(r) - 0.5 * h, w, h};
}

GridMap build_input(const GridMap& raw, std::span<const int> pool_radii) {
  const std::size_t rows = raw.rows(), cols = raw.cols(), cin = raw.channels();
  GridMap out({rows, cols, cin * (1 + pool_radii.size())});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t ch = 0; ch < cin; ++ch) out.at(r, c, ch) = raw.at(r, c, ch);
    }
  }
  // Box sums via prefix sums over the edge-replicated line.
  std::vector<double> horiz(rows * cols);
  std::vector<double> prefix;
  auto box_sums = [&prefix](long n, long rad, auto&& value, auto&& store) {
    prefix.assign(static_cast<std::size_t>(n + 2 * rad + 1), 0.0);
    for (long i = -rad; i < n + rad; ++i) {
      prefix[static_cast<std::size_t>(i + rad + 1)] =
          prefix[static_cast<std::size_t>(i + rad)] + value(clamp_index(i, static_cast<std::size_t>(n)));
    }
    for (long i = 0; i < n; ++i) {
      store(i, prefix[static_cast<std::size_t>(i + 2 * rad + 1)] - prefix[static_cast<std::size_t>(i)]);
    }
  };
  for (std::size_t s = 0; s < pool_radii.size(); ++s) {
    const long rad = pool_radii[s];
    const double norm = 1.0 / static_cast<double>((2 * rad + 1) * (2 * rad + 1));
    const std::size_t och_base = cin * (1 + s);
    for (std::size_t ch = 0; ch < cin; ++ch) {
      for (std::size_t r = 0; r < rows; ++r) {
        box_sums(static_cast<long>(cols), rad,
                 [&](std::size_t c) { return raw.at(r, c, ch); },
                 [&](long c, double v) { horiz[r * cols + static_cast<std::size_t>(c)] = v; });
      }
      for (std::size_t c = 0; c < cols; ++c) {
        box_sums(static_cast<long>(rows), rad,
                 [&](std::size_t r) { return horiz[r * cols + c]; },
                 [&](long r, double v) { out.at(static_cast<std::size_t>(r), c, och_base + ch) = v * norm; });
      }
    }
  }
  return out;
}

Deltas encode_deltas(const BBox& gt, const BBox& anchor) {
  if (!(gt.w > 0.0 && gt.h > 0.0 && anchor.w > 0.0 && anchor.h > 0.0)) {
    throw NumericDomainError("encode_deltas needs positive box sizes");
  }
  return {(gt.cx() - anchor.cx()) / anchor.w, (gt.cy() - anchor.cy()) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

BBox decode_deltas(const Deltas& d, const BBox& anchor) {
  const double cx = anchor.cx() + d.tx * anchor.w;
  const double cy = anchor.cy() + d.ty * anchor.h;
  const double w = anchor.w * std::exp(std::clamp(d.tw, -kDeltaClip, kDeltaClip));
  const double h = anchor.h * std::exp(std::clamp(d.th, -kDeltaClip, kDeltaClip));
  return {cx - 0.5 * w, cy - 0.5 * h, w, h};
}

std::vector<int> channel_dilations(std::size_t channels, std::span<const int> pool_radii) {
  const std::size_t groups = 1 + pool_radii.size();
  if (channels % groups != 0) {
    throw ShapeError("stem width " + std::to_string(channels) + " is not a multiple of " +
                     std::to_string(groups));
  }
  const std::size_t cin = channels / groups;
  std::vector<int> out(channels, 1);
  for (std::size_t s = 0; s < pool_radii.size(); ++s) {
    std::fill_n(out.begin() + static_cast<long>(cin * (1 + s)), cin, pool_radii[s]);
  }
  return out;
}

std::vector<double> gather_windows(const GridMap& input, int k, std::span<const int> dilations) {
  const std::size_t rows = input.rows(), cols = input.cols(), ch = input.channels();
  if (!dilations.empty() && dilations.size() != ch) throw ShapeError("one dilation per channel");
  const std::size_t len = ch * k * k + 1;
  const long half = k / 2;
  std::vector<double> out(rows * cols * len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* v = out.data() + (r * cols + c) * len;
      for (int dy = 0; dy < k; ++dy) {
        for (int dx = 0; dx < k; ++dx) {
          double* dst = v + static_cast<std::size_t>(dy * k + dx) * ch;
          for (std::size_t j = 0; j < ch; ++j) {
            const long d = dilations.empty() ? 1 : dilations[j];
            const std::size_t rr = clamp_index(static_cast<long>(r) + (dy - half) * d, rows);
            const std::size_t cc = clamp_index(static_cast<long>(c) + (dx - half) * d, cols);
            dst[j] = input.at(rr, cc, j);
          }
        }
      }
      v[len - 1] = 1.0;
    }
  }
  return out;
}

DetectorParams effective_weights(const DetectorParams& params) {
  DetectorParams eff = params;
  symmetrize(params, eff);
  return eff;
}

std::vector<Detection> forward(const GridMap& input, const DetectorParams& params,
                               const AnchorGrid& anchors) {
  if (input.channels() != params.channels()) {
    throw ShapeError("detector expects " + std::to_string(params.channels()) +
                     " input channels, got " + std::to_string(input.channels()));
  }
  if (input.rows() != anchors.rows() || input.cols() != anchors.cols()) {
    throw ShapeError("feature grid does not match the anchor grid");
  }
  const auto eff = effective_weights(params);
  const auto windows =
      gather_windows(input, params.k(), channel_dilations(input.channels(), params.pool_radii()));
  const std::size_t len = params.window_len();
  const auto& kern = simd::kernels();
  std::vector<Detection> out;
  out.reserve(anchors.size());
  for (std::size_t r = 0; r < anchors.rows(); ++r) {
    for (std::size_t c = 0; c < anchors.cols(); ++c) {
      const double* v = windows.data() + (r * anchors.cols() + c) * len;
      const double z = kern.dot(eff.obj().data(), v, len);
      Deltas d{kern.dot(eff.box(0).data(), v, len), kern.dot(eff.box(1).data(), v, len),
               kern.dot(eff.box(2).data(), v, len), kern.dot(eff.box(3).data(), v, len)};
      out.push_back({decode_deltas(d, anchors.anchor(r, c)), sigmoid(z)});
    }
  }
  return out;
}

std::vector<int> assign_cells(const AnchorGrid& anchors, std::span<const BBox> labels,
                              double pos_iou) {
  std::vector<int> assigned(anchors.size(), -1);
  if (labels.empty()) return assigned;
  for (std::size_t r = 0; r < anchors.rows(); ++r) {
    for (std::size_t c = 0; c < anchors.cols(); ++c) {
      const BBox a = anchors.anchor(r, c);
      const double px = anchors.center_x(c), py = anchors.center_y(r);
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t l = 0; l < labels.size(); ++l) {
        const BBox& b = labels[l];
        const double ov = boxgeom::iou(a, b);
        const bool inside = px >= b.x && px < b.right() && py >= b.y && py < b.bottom();
        if ((ov >= pos_iou || inside) && ov > best_iou) {
          best = static_cast<int>(l);
          best_iou = ov;
        }
      }
      assigned[r * anchors.cols() + c] = best;
    }
  }
  // Every label owns at least the cell whose center is nearest its center.
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::size_t best_cell = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < anchors.rows(); ++r) {
      for (std::size_t c = 0; c < anchors.cols(); ++c) {
        const double dx = anchors.center_x(c) - labels[l].cx();
        const double dy = anchors.center_y(r) - labels[l].cy();
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d) {
          best_d = d2;
          best_cell = r * anchors.cols() + c;
        }
      }
    }
    if (assigned[best_cell] < 0) assigned[best_cell] = static_cast<int>(l);
  }
  return assigned;
}

LossAndGrad loss_and_grad_windows(std::span<const double> windows,
                                  std::span<const BBox> labels, const DetectorParams& params,
                                  const AnchorGrid& anchors, const TrainConfig& cfg) {
  const std::size_t len = params.window_len();
  const std::size_t n = anchors.size();
  if (windows.size() != n * len) throw ShapeError("window buffer does not match params");
  const auto eff = effective_weights(params);
  const auto assigned = assign_cells(anchors, labels, cfg.pos_iou);
  const std::size_t npos = static_cast<std::size_t>(
      std::count_if(assigned.begin(), assigned.end(), [](int a) { return a >= 0; }));

  DetectorParams geff(params.channels(), params.k(), params.anchor_scale(),
                      params.pool_radii());
  const auto& kern = simd::kernels();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double reg_scale = npos > 0 ? cfg.reg_weight / static_cast<double>(npos) : 0.0;
  double cls = 0.0, reg = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double* v = windows.data() + i * len;
    const double z = kern.dot(eff.obj().data(), v, len);
    const double y = assigned[i] >= 0 ? 1.0 : 0.0;
    cls += softplus(z) - y * z;
    kern.axpy((sigmoid(z) - y) * inv_n, v, geff.obj().data(), len);
    if (assigned[i] < 0) continue;
    const std::size_t r = i / anchors.cols(), c = i % anchors.cols();
    const Deltas t = encode_deltas(labels[static_cast<std::size_t>(assigned[i])],
                                   anchors.anchor(r, c));
    const double target[4] = {t.tx, t.ty, t.tw, t.th};
    for (int j = 0; j < 4; ++j) {
      const double e = kern.dot(eff.box(j).data(), v, len) - target[j];
      reg += smooth_l1(e);
      kern.axpy(reg_scale * smooth_l1_grad(e), v, geff.box(j).data(), len);
    }
  }

  LossAndGrad out;
  out.cls_loss = cls * inv_n;
  out.reg_loss = reg * reg_scale;
  out.loss = out.cls_loss + out.reg_loss;
  out.positives = npos;
  out.grad = geff;
  symmetrize(geff, out.grad);
  return out;
}

LossAndGrad supervised_loss_and_grad(const GridMap& input, std::span<const BBox> labels,
                                     const DetectorParams& params, const AnchorGrid& anchors,
                                     const TrainConfig& cfg) {
  if (input.channels() != params.channels()) {
    throw ShapeError("detector expects " + std::to_string(params.channels()) +
                     " input channels, got " + std::to_string(input.channels()));
  }
  const auto windows =
      gather_windows(input, params.k(), channel_dilations(input.channels(), params.pool_radii()));
  return loss_and_grad_windows(windows, labels, params, anchors, cfg);
}

DetectorParams sgd_step(const DetectorParams& params, const DetectorParams& grad, double lr) {
  if (!params.same_shape(grad)) throw ShapeError("sgd_step: gradient shape mismatch");
  DetectorParams out = params;
  simd::kernels().axpy(-lr, grad.flat().data(), out.flat().data(), out.flat().size());
  return out;
}

std::optional<Detection> infer_top1(const GridMap& input, const DetectorParams& params,
                                    const AnchorGrid& anchors, double nms_iou,
                                    double min_score) {
  (void)nms_iou;  // the NMS winner is the top-ranked box whatever the threshold
  const auto dets = forward(input, params, anchors);
  if (dets.empty()) return std::nullopt;
  const auto best = std::min_element(dets.begin(), dets.end(), boxgeom::ranks_before);
  if (best->score < min_score) return std::nullopt;
  return *best;
}

std::string encode_checkpoint(const DetectorParams& params, const CheckpointMeta& meta) {
  nlohmann::json j;
  j["k"] = params.k();
  j["C"] = params.channels();
  j["anchor_scale"] = params.anchor_scale();
  j["pool_radii"] = params.pool_radii();
  j["w_obj"] = std::vector<double>(params.obj().begin(), params.obj().end());
  nlohmann::json boxes = nlohmann::json::array();
  for (int b = 0; b < 4; ++b) {
    boxes.push_back(std::vector<double>(params.box(b).begin(), params.box(b).end()));
  }
  j["w_box"] = boxes;
  j["meta"] = {{"iters", meta.iters}, {"seed", meta.seed}};
  return dump_json(j);
}

void write_checkpoint(const std::filesystem::path& path, const DetectorParams& params,
                      const CheckpointMeta& meta) {
  fsutil::write_file_atomic(path, encode_checkpoint(params, meta));
}

DetectorParams read_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  try {
    const auto j = nlohmann::json::parse(fsutil::read_file(path));
    DetectorParams p(j.at("C").get<std::size_t>(), j.at("k").get<int>(),
                     j.at("anchor_scale").get<double>(),
                     j.value("pool_radii", std::vector<int>{}));
    auto obj = j.at("w_obj").get<std::vector<double>>();
    if (obj.size() != p.window_len()) throw ParseError("w_obj has the wrong length");
    std::copy(obj.begin(), obj.end(), p.obj().begin());
    const auto& boxes = j.at("w_box");
    if (!boxes.is_array() || boxes.size() != 4) throw ParseError("w_box must hold 4 arrays");
    for (int b = 0; b < 4; ++b) {
      auto w = boxes[static_cast<std::size_t>(b)].get<std::vector<double>>();
      if (w.size() != p.window_len()) throw ParseError("w_box entry has the wrong length");
      std::copy(w.begin(), w.end(), p.box(b).begin());
    }
    if (meta) {
      meta->iters = j.at("meta").at("iters").get<long long>();
      meta->seed = j.at("meta").at("seed").get<std::uint64_t>();
    }
    if (!p.all_finite()) throw ParseError("non-finite weights");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint '" + path.string() + "': " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("bad checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace ppboost::detector
