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

#include <atomic>
#include <cstdlib>
#include <string>

#include "ppboost/simd/kernels.hpp"

namespace ppboost::simd {

#if !defined(PPBOOST_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(PPBOOST_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* resolve_default() {
  const char* env = std::getenv("PPBOOST_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return &scalar_kernels();
  if (cpu_has_avx2() && avx2_kernels() != nullptr) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{resolve_default()};
  return table;
}

}  // namespace

const KernelTable& kernels() {
  return *active().load(std::memory_order_acquire);
}

bool set_active_isa(Isa isa) {
  if (isa == Isa::kScalar) {
    active().store(&scalar_kernels(), std::memory_order_release);
    return true;
  }
  if (!cpu_has_avx2() || avx2_kernels() == nullptr) return false;
  active().store(avx2_kernels(), std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace ppboost::simd
