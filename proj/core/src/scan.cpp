#include "lrcssm/scan.hpp"

#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lrcssm/errors.hpp"

namespace lrcssm {

namespace detail {

bool scan_parallel_enabled(std::size_t work) {
#ifdef _OPENMP
  return work >= 4 * kScanBlock && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace detail

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

AffineElement affine_compose(const AffineElement& first, const AffineElement& second) {
  if (first.a.size() != second.a.size() || first.c.size() != second.c.size() || first.a.size() != first.c.size())
    throw ConfigError("affine_compose: dimension mismatch");
  AffineElement out{Vector(first.a.size()), Vector(first.a.size())};
  for (std::size_t i = 0; i < first.a.size(); ++i) {
    out.a[i] = second.a[i] * first.a[i];
    out.c[i] = second.a[i] * first.c[i] + second.c[i];
  }
  return out;
}

ScanResult prefix_scan_affine(const AffineSequence& elems, std::span<const double> x0) {
  const std::size_t T = elems.a.rows();
  const std::size_t D = elems.a.cols();
  if (!elems.c.same_shape(elems.a)) throw ConfigError("prefix_scan_affine: a and c shapes differ");
  if (x0.size() != D) throw ConfigError("prefix_scan_affine: x0 dimension mismatch");
  if (T == 0) throw ConfigError("prefix_scan_affine: empty sequence");

  // Fold x0 into the first element so the scanned offsets are the states.
  Matrix a = elems.a;
  Matrix c = elems.c;
  for (std::size_t i = 0; i < D; ++i) {
    c(0, i) = a(0, i) * x0[i] + c(0, i);
    a(0, i) = 0.0;
  }
  double* pa = a.data();
  double* pc = c.data();
  const auto st = inclusive_scan_indexed(T, [=](std::size_t e, std::size_t l) {
    const double* ae = pa + e * D;
    const double* ce = pc + e * D;
    double* al = pa + l * D;
    double* cl = pc + l * D;
    for (std::size_t i = 0; i < D; ++i) {
      cl[i] = al[i] * ce[i] + cl[i];
      al[i] = al[i] * ae[i];
    }
  });
  return {std::move(c), st};
}

ScanResult prefix_scan_affine(std::span<const AffineElement> elems, std::span<const double> x0) {
  if (elems.empty()) throw ConfigError("prefix_scan_affine: empty sequence");
  const std::size_t D = elems.front().a.size();
  AffineSequence seq{Matrix(elems.size(), D), Matrix(elems.size(), D)};
  for (std::size_t t = 0; t < elems.size(); ++t) {
    if (elems[t].a.size() != D || elems[t].c.size() != D)
      throw ConfigError("prefix_scan_affine: dimension mismatch at element " + std::to_string(t));
    for (std::size_t i = 0; i < D; ++i) {
      seq.a(t, i) = elems[t].a[i];
      seq.c(t, i) = elems[t].c[i];
    }
  }
  return prefix_scan_affine(seq, x0);
}

ScanResult reverse_scan_affine(const AffineSequence& elems) {
  const std::size_t T = elems.a.rows();
  const std::size_t D = elems.a.cols();
  if (!elems.c.same_shape(elems.a)) throw ConfigError("reverse_scan_affine: a and c shapes differ");
  Matrix a = elems.a;
  Matrix c = elems.c;
  if (T == 0) return {std::move(c), {}};
  for (std::size_t i = 0; i < D; ++i) a(T - 1, i) = 0.0;
  double* pa = a.data();
  double* pc = c.data();
  // out[t] = c_t + a_t out[t+1]: the element at t acts after the one at t+1.
  const auto st = reverse_scan_indexed(T, [=](std::size_t e, std::size_t l) {
    const double* ae = pa + e * D;
    const double* ce = pc + e * D;
    double* al = pa + l * D;
    double* cl = pc + l * D;
    for (std::size_t i = 0; i < D; ++i) {
      cl[i] = al[i] * ce[i] + cl[i];
      al[i] = al[i] * ae[i];
    }
  });
  return {std::move(c), st};
}

}  // namespace lrcssm
