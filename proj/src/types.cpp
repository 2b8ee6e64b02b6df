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

#include "ppboost/types.hpp"

#include <algorithm>
#include <cmath>

#include "ppboost/error.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost {

namespace {

void check_shape(const GridShape& s) {
  if (s.rows == 0 || s.cols == 0 || s.channels == 0) {
    throw ShapeError("grid dimensions must be positive");
  }
}

}  // namespace

GridMap::GridMap(GridShape shape, double fill)
    : shape_(shape), values_(shape.size(), fill) {
  check_shape(shape_);
}

GridMap::GridMap(GridShape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  check_shape(shape_);
  if (values_.size() != shape_.size()) {
    throw ShapeError("grid value count " + std::to_string(values_.size()) +
                     " does not match shape " + std::to_string(shape_.rows) +
                     "x" + std::to_string(shape_.cols) + "x" +
                     std::to_string(shape_.channels));
  }
}

double GridMap::min() const {
  return *std::min_element(values_.begin(), values_.end());
}

double GridMap::max() const {
  return *std::max_element(values_.begin(), values_.end());
}

double GridMap::sum() const {
  return simd::kernels().sum(values_.data(), values_.size());
}

bool GridMap::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

Mask::Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (bits_.size() != height_ * width_) {
    throw ShapeError("mask bit count does not match " + std::to_string(height_) +
                     "x" + std::to_string(width_));
  }
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

std::size_t Mask::count() const {
  return simd::kernels().count_nonzero(bits_.data(), bits_.size());
}

const char* to_string(Split s) {
  return s == Split::kTrain ? "train" : "infer";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "infer") return Split::kInfer;
  throw ValidationError("unknown split '" + s + "' (expected train|infer)");
}

}  // namespace ppboost
