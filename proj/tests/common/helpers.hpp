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

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "ppboost/types.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ppboost_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline ppboost::GridMap random_grid(std::mt19937_64& g, ppboost::GridShape s, double lo = -3.0,
                                    double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ppboost::GridMap m(s);
  for (auto& v : m.values()) v = u(g);
  return m;
}

inline ppboost::Mask random_mask(std::mt19937_64& g, std::size_t h, std::size_t w, double p) {
  std::bernoulli_distribution b(p);
  ppboost::Mask m(h, w);
  for (auto& v : m.bits()) v = b(g) ? 1 : 0;
  return m;
}

inline ppboost::BBox random_box(std::mt19937_64& g, double extent) {
  std::uniform_real_distribution<double> pos(-0.1 * extent, extent);
  std::uniform_real_distribution<double> size(0.5, 0.6 * extent);
  return {pos(g), pos(g), size(g), size(g)};
}

}  // namespace testutil
