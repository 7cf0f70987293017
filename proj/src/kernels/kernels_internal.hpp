#pragma once

#include "batchal/kernels.hpp"

namespace batchal::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double squared_distance_scalar(const double* a, const double* b, std::size_t n);

#if defined(__x86_64__) || defined(__i386__)
#define BATCHAL_HAVE_AVX2_KERNELS 1
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
double squared_distance_avx2(const double* a, const double* b, std::size_t n);
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
#define BATCHAL_HAVE_NEON_KERNELS 1
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
double squared_distance_neon(const double* a, const double* b, std::size_t n);
#endif

}  // namespace batchal::kernels::detail
