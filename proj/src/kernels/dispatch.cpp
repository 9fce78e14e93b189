#include <atomic>
#include <cstdlib>
#include <string>

#include "mixsynth/kernels.hpp"

namespace mixsynth::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("MIXSYNTH_KERNELS")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table_ptr{&table(detect())};
  return table_ptr;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (isa == Isa::avx2 && isa_available(Isa::avx2)) return avx2_table();
  return scalar_table();
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace mixsynth::kernels
