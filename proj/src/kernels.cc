/* Copyright 2026 The SceneForge Authors. All Rights Reserved.

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

#include "sf/kernels.h"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "sf/error.h"

namespace sf::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(SF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  const char* env = std::getenv("SF_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_table();
#if defined(SF_HAVE_AVX2)
  if (cpu_has_avx2()) return &avx2_table();
#endif
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> t{pick_default()};
  return t;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
  return cpu_has_avx2();
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw Error("kernel table '" + std::string(isa_name(isa)) +
                "' is not available on this CPU");
  }
#if defined(SF_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2_table();
#endif
  return scalar_table();
}

const KernelTable& active() {
  return *current().load(std::memory_order_acquire);
}

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

}  // namespace sf::kernels
