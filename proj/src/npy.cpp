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

#include "ppboost/npy.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>

#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"

static_assert(std::endian::native == std::endian::little,
              "npy payloads are handled as native little-endian");

namespace ppboost::npy {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::size_t skip_ws(std::string_view s, std::size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return i;
}

// Returns the position right after `'key':`, or npos.
std::size_t find_key(std::string_view header, std::string_view key) {
  std::string quoted = "'" + std::string(key) + "'";
  auto pos = header.find(quoted);
  if (pos == std::string_view::npos) return pos;
  pos = skip_ws(header, pos + quoted.size());
  if (pos >= header.size() || header[pos] != ':') return std::string_view::npos;
  return skip_ws(header, pos + 1);
}

Array parse_header(std::string_view header, const std::string& origin) {
  Array a;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("malformed npy header in '" + origin + "': " + what);
  };

  auto p = find_key(header, "descr");
  if (p == std::string_view::npos || header[p] != '\'') throw fail("no descr");
  auto end = header.find('\'', p + 1);
  if (end == std::string_view::npos) throw fail("unterminated descr");
  a.descr = std::string(header.substr(p + 1, end - p - 1));

  p = find_key(header, "fortran_order");
  if (p == std::string_view::npos) throw fail("no fortran_order");
  if (header.substr(p, 4) == "True") {
    throw ParseError("unsupported layout in '" + origin +
                     "': fortran_order=True (C order required)");
  }
  if (header.substr(p, 5) != "False") throw fail("bad fortran_order");

  p = find_key(header, "shape");
  if (p == std::string_view::npos || header[p] != '(') throw fail("no shape");
  end = header.find(')', p);
  if (end == std::string_view::npos) throw fail("unterminated shape");
  std::string_view tuple = header.substr(p + 1, end - p - 1);
  std::size_t i = 0;
  while (i < tuple.size()) {
    i = skip_ws(tuple, i);
    if (i >= tuple.size()) break;
    std::size_t j = i;
    while (j < tuple.size() && tuple[j] >= '0' && tuple[j] <= '9') ++j;
    if (j == i) throw fail("bad shape entry");
    a.shape.push_back(std::stoull(std::string(tuple.substr(i, j - i))));
    j = skip_ws(tuple, j);
    if (j < tuple.size() && tuple[j] == ',') ++j;
    i = j;
  }
  return a;
}

std::size_t itemsize(const std::string& descr) {
  if (descr == "<f4") return 4;
  if (descr == "|u1" || descr == "|b1") return 1;
  return 0;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  s += ")";
  return s;
}

std::vector<double> f32_payload(const Array& a, const std::string& origin) {
  std::vector<double> out(a.count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, a.data.data() + 4 * i, 4);
    if (!std::isfinite(f)) {
      throw ParseError("non-finite value at flat index " + std::to_string(i) +
                       " in '" + origin + "'");
    }
    out[i] = f;
  }
  return out;
}

std::string f32_bytes(std::span<const double> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + 4 * i, &f, 4);
  }
  return out;
}

Mask read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ParseError("cannot decode png '" + path.string() + "': " +
                     image.message);
  }
  std::unique_ptr<png_image, void (*)(png_imagep)> guard(&image, png_image_free);
  if ((image.format & PNG_FORMAT_FLAG_COLOR) != 0 ||
      (image.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    throw ParseError("unsupported png '" + path.string() +
                     "': expected 8-bit grayscale");
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    throw ParseError("cannot decode png '" + path.string() + "': " +
                     image.message);
  }
  return Mask(image.height, image.width, std::move(buf));
}

}  // namespace

std::size_t Array::count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Array parse(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 10 || bytes.substr(0, kMagicLen) != std::string_view(kMagic, kMagicLen)) {
    throw ParseError("malformed npy header in '" + origin + "': bad magic");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw ParseError("truncated npy header in '" + origin + "'");
    for (int k = 0; k < 4; ++k) {
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + k]))
                    << (8 * k);
    }
    offset = 12;
  } else {
    throw ParseError("unsupported npy version " + std::to_string(major) +
                     " in '" + origin + "'");
  }
  if (bytes.size() < offset + header_len) {
    throw ParseError("truncated npy header in '" + origin + "'");
  }
  Array a = parse_header(bytes.substr(offset, header_len), origin);
  const std::size_t isz = itemsize(a.descr);
  if (isz == 0) {
    throw ParseError("unsupported dtype '" + a.descr + "' in '" + origin + "'");
  }
  const std::size_t need = a.count() * isz;
  const std::size_t start = offset + header_len;
  if (bytes.size() - start != need) {
    throw ParseError("payload size mismatch in '" + origin + "': expected " +
                     std::to_string(need) + " bytes, found " +
                     std::to_string(bytes.size() - start));
  }
  a.data = std::string(bytes.substr(start));
  return a;
}

std::string serialize(const Array& a) {
  std::string dict = "{'descr': '" + a.descr +
                     "', 'fortran_order': False, 'shape': " +
                     shape_string(a.shape) + ", }";
  // magic(6) + version(2) + len(2) + dict + padding + '\n' aligned to 64.
  std::size_t total = kMagicLen + 4 + dict.size() + 1;
  const std::size_t pad = (64 - total % 64) % 64;
  dict.append(pad, ' ');
  dict.push_back('\n');
  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xFF));
  out.push_back(static_cast<char>((dict.size() >> 8) & 0xFF));
  out += dict;
  out += a.data;
  return out;
}

Array read(const fs::path& path) {
  return parse(fsutil::read_file(path), path.string());
}

void write(const fs::path& path, const Array& a) {
  fsutil::write_file_atomic(path, serialize(a));
}

GridMap read_grid(const fs::path& path) {
  Array a = read(path);
  if (a.descr != "<f4") {
    throw ParseError("unsupported dtype '" + a.descr + "' in '" +
                     path.string() + "' (grids must be <f4)");
  }
  GridShape shape;
  if (a.shape.size() == 2) {
    shape = {a.shape[0], a.shape[1], 1};
  } else if (a.shape.size() == 3) {
    shape = {a.shape[0], a.shape[1], a.shape[2]};
  } else {
    throw ParseError("grid '" + path.string() + "' must be 2-D or 3-D, got " +
                     std::to_string(a.shape.size()) + "-D");
  }
  if (shape.rows == 0 || shape.cols == 0 || shape.channels == 0) {
    throw ParseError("grid '" + path.string() + "' has an empty dimension");
  }
  return GridMap(shape, f32_payload(a, path.string()));
}

std::string encode_grid(const GridMap& grid) {
  Array a;
  a.descr = "<f4";
  if (grid.channels() == 1) {
    a.shape = {grid.rows(), grid.cols()};
  } else {
    a.shape = {grid.rows(), grid.cols(), grid.channels()};
  }
  a.data = f32_bytes(grid.values());
  return serialize(a);
}

void write_grid(const fs::path& path, const GridMap& grid) {
  fsutil::write_file_atomic(path, encode_grid(grid));
}

std::vector<double> read_vector(const fs::path& path) {
  Array a = read(path);
  if (a.descr != "<f4") {
    throw ParseError("unsupported dtype '" + a.descr + "' in '" +
                     path.string() + "'");
  }
  const bool ok = a.shape.size() == 1 || (a.shape.size() == 2 && a.shape[0] == 1);
  if (!ok) throw ParseError("'" + path.string() + "' is not a vector");
  return f32_payload(a, path.string());
}

void write_vector(const fs::path& path, std::span<const double> values) {
  Array a;
  a.descr = "<f4";
  a.shape = {values.size()};
  a.data = f32_bytes(values);
  write(path, a);
}

Mask read_mask(const fs::path& path) {
  if (path.extension() == ".png") return read_png(path);
  Array a = read(path);
  if (a.descr != "|u1" && a.descr != "|b1") {
    throw ParseError("unsupported dtype '" + a.descr + "' in '" +
                     path.string() + "' (masks must be u8)");
  }
  if (a.shape.size() != 2) {
    throw ParseError("mask '" + path.string() + "' must be 2-D");
  }
  std::vector<std::uint8_t> bits(a.data.begin(), a.data.end());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) {
      throw ParseError("mask '" + path.string() + "' holds value " +
                       std::to_string(bits[i]) + " at flat index " +
                       std::to_string(i) + " (expected 0/1)");
    }
  }
  return Mask(a.shape[0], a.shape[1], std::move(bits));
}

void write_mask(const fs::path& path, const Mask& mask) {
  Array a;
  a.descr = "|u1";
  a.shape = {mask.height(), mask.width()};
  a.data.assign(mask.bits().begin(), mask.bits().end());
  write(path, a);
}

}  // namespace ppboost::npy
