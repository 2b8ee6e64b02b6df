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

#include "ppboost/simd/kernels.hpp"

namespace ppboost::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_scalar(double alpha, const double* x, double beta, double* y,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * y[i] + beta * x[i];
}

void threshold_gt_scalar(const double* x, double t, std::uint8_t* out,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > t ? 1 : 0;
}

std::size_t count_nonzero_scalar(const std::uint8_t* a, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += a[i] != 0;
  return c;
}

std::size_t count_both_scalar(const std::uint8_t* a, const std::uint8_t* b,
                              std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += (a[i] != 0) & (b[i] != 0);
  return c;
}

constexpr KernelTable kScalarTable{
    Isa::kScalar,        dot_scalar,           sum_scalar,
    axpy_scalar,         axpby_scalar,         threshold_gt_scalar,
    count_nonzero_scalar, count_both_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace ppboost::simd
