#include <atomic>
#include <cstdlib>
#include <string>

#include "procal/error.hpp"
#include "procal/simd/kernels.hpp"

namespace procal::simd {
namespace {

constexpr KernelTable kScalar{&detail::dot_scalar, &detail::axpy_scalar};
#if defined(PROCAL_HAVE_AVX2)
constexpr KernelTable kAvx2{&detail::dot_avx2, &detail::axpy_avx2};
#endif
#if defined(PROCAL_HAVE_NEON)
constexpr KernelTable kNeon{&detail::dot_neon, &detail::axpy_neon};
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(PROCAL_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(PROCAL_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect() {
  if (const char* env = std::getenv("PROCAL_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && cpu_supports(Isa::avx2)) return Isa::avx2;
    if (want == "neon" && cpu_supports(Isa::neon)) return Isa::neon;
  }
  if (cpu_supports(Isa::avx2)) return Isa::avx2;
  if (cpu_supports(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels(detect())};
  return table;
}

std::atomic<Isa>& active_tag() {
  static std::atomic<Isa> tag{detect()};
  return tag;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& kernels(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return kScalar;
    case Isa::avx2:
#if defined(PROCAL_HAVE_AVX2)
      return kAvx2;
#else
      break;
#endif
    case Isa::neon:
#if defined(PROCAL_HAVE_NEON)
      return kNeon;
#else
      break;
#endif
  }
  throw ParameterError("SIMD variant not compiled in: " + std::string(to_string(isa)));
}

Isa active_isa() { return active_tag().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ParameterError("SIMD variant not supported on this CPU: " + std::string(to_string(isa)));
  }
  active_table().store(&kernels(isa), std::memory_order_relaxed);
  active_tag().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return active_table().load(std::memory_order_relaxed)->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  active_table().load(std::memory_order_relaxed)->axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> matrix, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias, std::span<double> out) {
  if (matrix.size() != rows * cols || x.size() != cols || out.size() != rows ||
      (!bias.empty() && bias.size() != rows)) {
    throw ShapeError("gemv: shape mismatch");
  }
  const KernelTable* k = active_table().load(std::memory_order_relaxed);
  for (std::size_t r = 0; r < rows; ++r) {
    const double v = k->dot(matrix.data() + r * cols, x.data(), cols);
    out[r] = bias.empty() ? v : v + bias[r];
  }
}

void gemv_transposed_acc(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                         std::span<const double> v, std::span<double> out) {
  if (matrix.size() != rows * cols || v.size() != rows || out.size() != cols) {
    throw ShapeError("gemv_transposed_acc: shape mismatch");
  }
  const KernelTable* k = active_table().load(std::memory_order_relaxed);
  for (std::size_t r = 0; r < rows; ++r) {
    k->axpy(v[r], matrix.data() + r * cols, out.data(), cols);
  }
}

}  // namespace procal::simd
