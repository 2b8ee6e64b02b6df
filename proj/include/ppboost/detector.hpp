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

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppboost/types.hpp"

// Single-class anchor-grid detector. Each grid cell owns one anchor; a
// linear model over the cell's k x k window (edge replicated) predicts an
// objectness logit and four box deltas.
//
// Input grids go through a fixed multi-scale stem first: the raw channels
// followed by box means at each pooling radius. The stem gives the linear
// window model enough context to regress object extent.
//
// The effective weights are the horizontal-mirror symmetrization of the
// stored weights (antisymmetric for the x-offset regressor), so forward()
// commutes with horizontal flips for every parameter value.
namespace ppboost::detector {

struct DetectorConfig {
  int k = 3;
  double anchor_scale = 3.0;
  std::vector<int> pool_radii{2, 4, 8, 16};
  double min_score = 0.05;
  double nms_iou = 0.7;

  void validate() const;
};

struct TrainConfig {
  double lr = 0.004;
  int iters = 2000;
  double momentum = 0.9;
  double pos_iou = 0.5;
  double reg_weight = 1.0;

  void validate() const;
};

class DetectorParams {
 public:
  DetectorParams() = default;
  // Zero-initialized weights for `channels` stem channels.
  DetectorParams(std::size_t channels, int k, double anchor_scale,
                 std::vector<int> pool_radii);

  std::size_t channels() const { return channels_; }
  int k() const { return k_; }
  double anchor_scale() const { return anchor_scale_; }
  const std::vector<int>& pool_radii() const { return pool_radii_; }

  // C * k * k + 1 (window plus bias).
  std::size_t window_len() const { return channels_ * k_ * k_ + 1; }

  std::span<double> obj() { return {w_.data(), window_len()}; }
  std::span<const double> obj() const { return {w_.data(), window_len()}; }
  // j in {0: tx, 1: ty, 2: tw, 3: th}
  std::span<double> box(int j) {
    return {w_.data() + (j + 1) * window_len(), window_len()};
  }
  std::span<const double> box(int j) const {
    return {w_.data() + (j + 1) * window_len(), window_len()};
  }

  std::span<double> flat() { return w_; }
  std::span<const double> flat() const { return w_; }

  bool same_shape(const DetectorParams& o) const {
    return channels_ == o.channels_ && k_ == o.k_ && w_.size() == o.w_.size();
  }
  bool all_finite() const;
  bool operator==(const DetectorParams&) const = default;

 private:
  std::size_t channels_ = 0;
  int k_ = 3;
  double anchor_scale_ = 3.0;
  std::vector<int> pool_radii_;
  std::vector<double> w_;
};

class AnchorGrid {
 public:
  AnchorGrid(std::size_t rows, std::size_t cols, std::size_t image_h,
             std::size_t image_w, double anchor_scale);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  double cell_w() const { return cell_w_; }
  double cell_h() const { return cell_h_; }
  std::size_t image_h() const { return image_h_; }
  std::size_t image_w() const { return image_w_; }

  double center_x(std::size_t c) const { return (static_cast<double>(c) + 0.5) * cell_w_; }
  double center_y(std::size_t r) const { return (static_cast<double>(r) + 0.5) * cell_h_; }
  BBox anchor(std::size_t r, std::size_t c) const;

 private:
  std::size_t rows_, cols_, image_h_, image_w_;
  double cell_w_, cell_h_, scale_;
};

// Raw channels, then the box mean at each radius for every raw channel.
GridMap build_input(const GridMap& raw, std::span<const int> pool_radii);

struct Deltas {
  double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;
};

Deltas encode_deltas(const BBox& gt, const BBox& anchor);
BBox decode_deltas(const Deltas& d, const BBox& anchor);

// Window sampling step per stem channel: 1 for raw channels, the pooling
// radius for each pooled group.
std::vector<int> channel_dilations(std::size_t channels, std::span<const int> pool_radii);

// Row-major per-cell windows, window_len() values each (bias last). Taps of
// channel j sit dilations[j] cells apart (all 1 when empty).
std::vector<double> gather_windows(const GridMap& input, int k,
                                   std::span<const int> dilations = {});

// Stored weights mapped to effective (symmetrized) weights.
DetectorParams effective_weights(const DetectorParams& params);

// One detection per cell, row-major. input must be the stem output.
std::vector<Detection> forward(const GridMap& input, const DetectorParams& params,
                               const AnchorGrid& anchors);

struct LossAndGrad {
  double loss = 0.0;
  double cls_loss = 0.0;
  double reg_loss = 0.0;
  std::size_t positives = 0;
  DetectorParams grad;
};

// Positive assignment: label index per cell, -1 for negatives.
std::vector<int> assign_cells(const AnchorGrid& anchors, std::span<const BBox> labels,
                              double pos_iou);

// Mean BCE over all cells plus reg_weight * mean (over positives) of the
// summed smooth-L1 delta error. Gradients are exact.
LossAndGrad supervised_loss_and_grad(const GridMap& input, std::span<const BBox> labels,
                                     const DetectorParams& params,
                                     const AnchorGrid& anchors, const TrainConfig& cfg);

// Same as above from precomputed windows (hot path of training).
LossAndGrad loss_and_grad_windows(std::span<const double> windows,
                                  std::span<const BBox> labels,
                                  const DetectorParams& params, const AnchorGrid& anchors,
                                  const TrainConfig& cfg);

DetectorParams sgd_step(const DetectorParams& params, const DetectorParams& grad, double lr);

// forward -> NMS -> best detection if its score >= min_score.
std::optional<Detection> infer_top1(const GridMap& input, const DetectorParams& params,
                                    const AnchorGrid& anchors, double nms_iou,
                                    double min_score = 0.05);

struct CheckpointMeta {
  long long iters = 0;
  std::uint64_t seed = 0;
};

std::string encode_checkpoint(const DetectorParams& params, const CheckpointMeta& meta);
void write_checkpoint(const std::filesystem::path& path, const DetectorParams& params,
                      const CheckpointMeta& meta);
DetectorParams read_checkpoint(const std::filesystem::path& path,
                               CheckpointMeta* meta = nullptr);

}  // namespace ppboost::detector
