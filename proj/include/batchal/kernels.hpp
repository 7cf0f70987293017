#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops. Each kernel has a scalar reference
// implementation and, where the CPU supports it, a vectorized variant; the
// variant is chosen once at startup and can be overridden for testing.
namespace batchal::kernels {

enum class Level { Scalar, Avx2, Neon };

std::string_view to_string(Level level) noexcept;

struct Table {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const Table& scalar_table() noexcept;
// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const Table* table_for(Level level) noexcept;

Level detect_best_level() noexcept;
Level active_level() noexcept;
// Returns false (and leaves the active table alone) when the level is unavailable.
bool set_active_level(Level level) noexcept;

const Table& active() noexcept;

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}

}  // namespace batchal::kernels
