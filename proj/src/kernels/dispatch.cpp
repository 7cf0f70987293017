#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_internal.hpp"

namespace batchal::kernels {

namespace {

constexpr Table kScalar{detail::dot_scalar, detail::axpy_scalar, detail::squared_distance_scalar};

#ifdef BATCHAL_HAVE_AVX2_KERNELS
constexpr Table kAvx2{detail::dot_avx2, detail::axpy_avx2, detail::squared_distance_avx2};

bool cpu_has_avx2() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

#ifdef BATCHAL_HAVE_NEON_KERNELS
constexpr Table kNeon{detail::dot_neon, detail::axpy_neon, detail::squared_distance_neon};
#endif

// BATCHAL_SIMD=scalar pins the reference kernels for the whole process.
Level initial_level() noexcept {
  if (const char* env = std::getenv("BATCHAL_SIMD")) {
    if (std::string_view(env) == "scalar") return Level::Scalar;
  }
  return detect_best_level();
}

struct ActiveState {
  std::atomic<Level> level;
  std::atomic<const Table*> table;
};

ActiveState& current() noexcept {
  static ActiveState state = [] {
    const Level level = initial_level();
    return ActiveState{level, table_for(level)};
  }();
  return state;
}

}  // namespace

std::string_view to_string(Level level) noexcept {
  switch (level) {
    case Level::Scalar: return "scalar";
    case Level::Avx2: return "avx2";
    case Level::Neon: return "neon";
  }
  return "unknown";
}

const Table& scalar_table() noexcept { return kScalar; }

const Table* table_for(Level level) noexcept {
  switch (level) {
    case Level::Scalar:
      return &kScalar;
    case Level::Avx2:
#ifdef BATCHAL_HAVE_AVX2_KERNELS
      if (cpu_has_avx2()) return &kAvx2;
#endif
      return nullptr;
    case Level::Neon:
#ifdef BATCHAL_HAVE_NEON_KERNELS
      return &kNeon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Level detect_best_level() noexcept {
  if (table_for(Level::Avx2) != nullptr) return Level::Avx2;
  if (table_for(Level::Neon) != nullptr) return Level::Neon;
  return Level::Scalar;
}

Level active_level() noexcept { return current().level.load(std::memory_order_relaxed); }

bool set_active_level(Level level) noexcept {
  const Table* table = table_for(level);
  if (table == nullptr) return false;
  current().table.store(table, std::memory_order_relaxed);
  current().level.store(level, std::memory_order_relaxed);
  return true;
}

const Table& active() noexcept { return *current().table.load(std::memory_order_relaxed); }

}  // namespace batchal::kernels
