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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ppboost/types.hpp"

// NPY v1.0 reader/writer. Canonical tensor dtype is little-endian f32 in C
// order; masks are u8. Writers emit the same header layout numpy does
// (64-byte aligned, space padded), so files round-trip bit-exactly.
namespace ppboost::npy {

struct Array {
  std::string descr;  // e.g. "<f4", "|u1"
  std::vector<std::size_t> shape;
  std::string data;  // raw little-endian payload

  std::size_t count() const;
};

Array parse(std::string_view bytes, const std::string& origin);
std::string serialize(const Array& a);

Array read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Array& a);

// 2-D (rows, cols) or 3-D (rows, cols, channels) f32 grid.
GridMap read_grid(const std::filesystem::path& path);
// channels == 1 is written as 2-D.
void write_grid(const std::filesystem::path& path, const GridMap& grid);
std::string encode_grid(const GridMap& grid);

// 1-D f32 vector, or 2-D with a singleton leading axis.
std::vector<double> read_vector(const std::filesystem::path& path);
void write_vector(const std::filesystem::path& path,
                  std::span<const double> values);

// u8 (or bool) 2-D mask from .npy, or 8-bit grayscale .png (nonzero = 1).
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace ppboost::npy
