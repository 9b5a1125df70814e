#pragma once

// Data-parallel inner loops shared by the model and the memory bank.
//
// Every variant reduces in the same order: four interleaved partial sums
// (lane l accumulates elements i with i % 4 == l), combined as
// (s0 + s1) + (s2 + s3). With FMA contraction disabled this makes the scalar
// reference and each vector variant bit-identical, so switching ISA never
// changes a training trajectory.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace procal::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

/// Variants compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();

/// Variant used by the dispatched entry points below. Chosen once from
/// PROCAL_SIMD (scalar|avx2|neon|auto) or CPU detection.
Isa active_isa();

/// Overrides the dispatched variant; throws ParameterError if unavailable.
void set_active_isa(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

/// Explicit variant access, used by the equivalence tests.
const KernelTable& kernels(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// out[r] = dot(row r of the rows x cols row-major matrix, x) + bias[r].
/// Empty bias means zero.
void gemv(std::span<const double> matrix, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias, std::span<double> out);

/// out += matrix^T * v
void gemv_transposed_acc(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                         std::span<const double> v, std::span<double> out);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
#if defined(PROCAL_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif
#if defined(PROCAL_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
#endif
}  // namespace detail

}  // namespace procal::simd
