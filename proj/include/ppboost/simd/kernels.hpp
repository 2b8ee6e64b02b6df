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
#include <string_view>

// Data-parallel inner loops used across the toolkit. Every kernel has a
// scalar reference implementation and an AVX2 variant; the table is chosen
// once at startup from CPUID and can be pinned with PPBOOST_SIMD=scalar.
//
// Elementwise kernels are bit-identical across variants. Reductions may
// differ in the last bits because the AVX2 variant sums in four lanes.
namespace ppboost::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * y[i] + beta * x[i]
  void (*axpby)(double alpha, const double* x, double beta, double* y,
                std::size_t n);
  // out[i] = x[i] > t ? 1 : 0
  void (*threshold_gt)(const double* x, double t, std::uint8_t* out,
                       std::size_t n);
  // number of nonzero bytes
  std::size_t (*count_nonzero)(const std::uint8_t* a, std::size_t n);
  // number of positions where both bytes are nonzero
  std::size_t (*count_both)(const std::uint8_t* a, const std::uint8_t* b,
                            std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_has_avx2();

// Active table. First use resolves PPBOOST_SIMD (scalar|avx2|auto) and CPUID.
const KernelTable& kernels();

// Overrides the active table; returns false if the ISA is unavailable.
// Intended for tests and benchmarks.
bool set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace ppboost::simd
