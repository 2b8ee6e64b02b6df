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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppboost {

struct GridShape {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t channels = 1;

  std::size_t cells() const { return rows * cols; }
  std::size_t size() const { return rows * cols * channels; }
  bool operator==(const GridShape&) const = default;
};

// Dense row-major grid, channel-minor: value(r, c, ch) lives at
// (r * cols + c) * channels + ch. Stored in double; files are f32.
class GridMap {
 public:
  GridMap() = default;
  explicit GridMap(GridShape shape, double fill = 0.0);
  GridMap(GridShape shape, std::vector<double> values);

  const GridShape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return values_[(r * shape_.cols + c) * shape_.channels + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return values_[(r * shape_.cols + c) * shape_.channels + ch];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  // Channel vector of one cell.
  std::span<const double> cell(std::size_t r, std::size_t c) const {
    return {values_.data() + (r * shape_.cols + c) * shape_.channels,
            shape_.channels};
  }

  double min() const;
  double max() const;
  double sum() const;
  bool all_finite() const;

 private:
  GridShape shape_{};
  std::vector<double> values_;
};

struct PromptEmbedding {
  std::string prompt_id;
  std::vector<double> vector;
};

// Axis-aligned box, (x, y) top-left in continuous pixel units, y down.
// Pixel (c, r) occupies [c, c+1) x [r, r+1).
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }
  bool operator==(const BBox&) const = default;
};

struct Detection {
  BBox box;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : height_(height), width_(width), bits_(height * width, fill) {}
  Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return bits_[r * width_ + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const {
    return bits_[r * width_ + c];
  }
  std::span<std::uint8_t> bits() { return bits_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t count() const;
  bool same_dims(const Mask& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool operator==(const Mask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

enum class Split { kTrain, kInfer };

const char* to_string(Split s);
Split parse_split(const std::string& s);

struct SampleRecord {
  std::string sample_id;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  GridShape grid;
  std::string logits_path;
  std::string prompt_id;
  std::optional<std::string> gt_mask_path;
  Split split = Split::kTrain;

  // Optional extras. features_path is the detector's image feature grid;
  // vlm_features_path holds patch features for cosine logits.
  std::optional<std::string> features_path;
  std::optional<std::string> vlm_features_path;
  std::optional<std::string> image_path;
  std::optional<double> noise_sigma;
};

struct RngSeed {
  std::uint64_t value = 0;
};

}  // namespace ppboost
