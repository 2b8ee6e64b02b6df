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
#include "ppboost/simd/kernels.hpp"

using namespace ppboost;

namespace {

struct Buffers {
  std::vector<double> a, b;
  std::vector<std::uint8_t> m, n;
};

Buffers make(std::mt19937_64& g, std::size_t len) {
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::bernoulli_distribution bit(0.4);
  Buffers x;
  for (std::size_t i = 0; i < len; ++i) {
    x.a.push_back(u(g));
    x.b.push_back(u(g));
    // Mask bytes are any nonzero value, not just 1.
    x.m.push_back(bit(g) ? static_cast<std::uint8_t>(1 + g() % 255) : 0);
    x.n.push_back(bit(g) ? 1 : 0);
  }
  return x;
}

double magnitude_sum(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

}  // namespace

TEST_SUITE("simd") {
  TEST_CASE("scalar kernels on known inputs") {
    const auto& k = simd::scalar_kernels();
    const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
    CHECK(k.dot(a, b, 3) == 32.0);
    CHECK(k.sum(a, 3) == 6.0);
    double y[] = {1, 1, 1};
    k.axpy(2.0, a, y, 3);
    CHECK(y[2] == 7.0);
    k.axpby(0.5, a, 2.0, y, 3);  // y = 0.5 y + 2 a
    CHECK(y[0] == 0.5 * 3 + 2);
    std::uint8_t out[3];
    k.threshold_gt(a, 2.0, out, 3);
    CHECK(out[0] == 0);
    CHECK(out[1] == 0);
    CHECK(out[2] == 1);
    const std::uint8_t m1[] = {1, 0, 7, 1}, m2[] = {1, 1, 3, 0};
    CHECK(k.count_nonzero(m1, 4) == 3);
    CHECK(k.count_both(m1, m2, 4) == 2);
  }

  TEST_CASE("avx2 matches scalar") {
    const auto* v = simd::avx2_kernels();
    if (!v || !simd::cpu_has_avx2()) {
      MESSAGE("AVX2 variant unavailable; skipped");
      return;
    }
    const auto& s = simd::scalar_kernels();
    std::mt19937_64 g(21);
    for (std::size_t len : {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 31, 32, 33, 63, 64, 65, 100, 1023, 4099}) {
      auto x = make(g, len);
      // Reductions: lane order may differ, bounded by a rounding envelope.
      const double tol = 1e-14 * (magnitude_sum(x.a, x.b) + 1.0);
      CHECK(std::abs(v->dot(x.a.data(), x.b.data(), len) - s.dot(x.a.data(), x.b.data(), len)) <= tol);
      CHECK(std::abs(v->sum(x.a.data(), len) - s.sum(x.a.data(), len)) <= 1e-12 * (1e3 * len + 1));
      // Elementwise kernels are bit-identical.
      auto y1 = x.b, y2 = x.b;
      s.axpy(0.37, x.a.data(), y1.data(), len);
      v->axpy(0.37, x.a.data(), y2.data(), len);
      CHECK(y1 == y2);
      s.axpby(0.9, x.a.data(), 0.1, y1.data(), len);
      v->axpby(0.9, x.a.data(), 0.1, y2.data(), len);
      CHECK(y1 == y2);
      std::vector<std::uint8_t> t1(len), t2(len);
      s.threshold_gt(x.a.data(), 12.5, t1.data(), len);
      v->threshold_gt(x.a.data(), 12.5, t2.data(), len);
      CHECK(t1 == t2);
      CHECK(s.count_nonzero(x.m.data(), len) == v->count_nonzero(x.m.data(), len));
      CHECK(s.count_both(x.m.data(), x.n.data(), len) == v->count_both(x.m.data(), x.n.data(), len));
    }
  }

  TEST_CASE("threshold handles NaN-free edge values identically") {
    const auto* v = simd::avx2_kernels();
    if (!v || !simd::cpu_has_avx2()) return;
    std::vector<double> x{0.5, 0.5000000000000001, 0.4999999999999999, -0.0, 0.0, 1e308, -1e308, 0.5};
    std::vector<std::uint8_t> a(x.size()), b(x.size());
    simd::scalar_kernels().threshold_gt(x.data(), 0.5, a.data(), x.size());
    v->threshold_gt(x.data(), 0.5, b.data(), x.size());
    CHECK(a == b);
  }

  TEST_CASE("active table can be pinned") {
    const auto before = simd::kernels().isa;
    CHECK(simd::set_active_isa(simd::Isa::kScalar));
    CHECK(simd::kernels().isa == simd::Isa::kScalar);
    CHECK(simd::isa_name(simd::Isa::kScalar) == "scalar");
    simd::set_active_isa(before);
  }
}
