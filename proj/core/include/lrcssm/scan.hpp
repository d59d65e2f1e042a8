#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "lrcssm/matrix.hpp"

namespace lrcssm {

/// Leaf block length of the blocked scan. Fixed (independent of the
/// thread count) so results are bit-identical for any number of workers.
inline constexpr std::size_t kScanBlock = 64;

/// Instrumentation of one scan: barrier-separated parallel phases and the
/// number of element combinations performed.
struct ScanStats {
  std::size_t sync_rounds = 0;
  std::size_t combines = 0;

  ScanStats& operator+=(const ScanStats& o) {
    sync_rounds += o.sync_rounds;
    combines += o.combines;
    return *this;
  }
};

namespace detail {
bool scan_parallel_enabled(std::size_t work);
}

/// In-place inclusive scan over `n` elements addressed by index.
/// `combine(earlier, later)` must replace element `later` with
/// (element `earlier`) followed by (element `later`) under an associative
/// operator.
///
/// Leaves of kScanBlock elements are folded sequentially, the block
/// totals are scanned with a Brent-Kung up/down sweep, and the carries are
/// pushed back into the leaves. Every phase is a parallel loop; the phase
/// count is at most 2 ceil(log2 n).
template <class Combine>
ScanStats inclusive_scan_indexed(std::size_t n, Combine&& combine, std::size_t block = kScanBlock) {
  ScanStats st;
  if (n <= 1) return st;
  block = std::max<std::size_t>(block, 2);
  const std::size_t nblocks = (n + block - 1) / block;
  const auto block_last = [&](std::size_t b) { return std::min(n, (b + 1) * block) - 1; };
  const bool par = detail::scan_parallel_enabled(n);

  // Phase 1: sequential fold inside each leaf.
#pragma omp parallel for schedule(static) if (par && nblocks > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * block;
    const std::size_t hi = block_last(static_cast<std::size_t>(b));
    for (std::size_t i = lo + 1; i <= hi; ++i) combine(i - 1, i);
  }
  ++st.sync_rounds;
  st.combines += n - nblocks;
  if (nblocks == 1) return st;

  // Phase 2: Brent-Kung over the block totals.
  std::size_t top = 1;
  for (std::size_t d = 1; d < nblocks; d <<= 1) {
    top = d;
    const std::size_t count = nblocks / (2 * d);
    if (count == 0) continue;
#pragma omp parallel for schedule(static) if (par && count > 1)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
      const std::size_t i = 2 * d - 1 + static_cast<std::size_t>(k) * 2 * d;
      combine(block_last(i - d), block_last(i));
    }
    ++st.sync_rounds;
    st.combines += count;
  }
  for (std::size_t d = top / 2; d >= 1; d >>= 1) {
    const std::size_t first = 3 * d - 1;
    if (first >= nblocks) continue;
    const std::size_t count = (nblocks - first + 2 * d - 1) / (2 * d);
#pragma omp parallel for schedule(static) if (par && count > 1)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
      const std::size_t i = first + static_cast<std::size_t>(k) * 2 * d;
      combine(block_last(i - d), block_last(i));
    }
    ++st.sync_rounds;
    st.combines += count;
  }

  // Phase 3: carry the prefix of the previous block into each leaf.
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t b = 1; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t carry = block_last(static_cast<std::size_t>(b) - 1);
    const std::size_t lo = static_cast<std::size_t>(b) * block;
    const std::size_t hi = block_last(static_cast<std::size_t>(b));
    for (std::size_t i = lo; i < hi; ++i) combine(carry, i);
  }
  ++st.sync_rounds;
  st.combines += (n - nblocks) - (block_last(0));
  return st;
}

/// Same as inclusive_scan_indexed but running from the last element to the
/// first; `combine(later_in_time, earlier_in_time)` folds the element that
/// is applied first in reverse order into the other one.
template <class Combine>
ScanStats reverse_scan_indexed(std::size_t n, Combine&& combine, std::size_t block = kScanBlock) {
  return inclusive_scan_indexed(
      n, [&](std::size_t a, std::size_t b) { combine(n - 1 - a, n - 1 - b); }, block);
}

/// The map x -> a * x + c (elementwise over D lanes).
struct AffineElement {
  Vector a;
  Vector c;

  static AffineElement identity(std::size_t dim) { return {Vector(dim, 1.0), Vector(dim, 0.0)}; }
};

/// "Apply first, then second": x -> a2 (a1 x + c1) + c2.
AffineElement affine_compose(const AffineElement& first, const AffineElement& second);

/// A length-T sequence of affine maps stored as two T x D arrays.
struct AffineSequence {
  Matrix a;
  Matrix c;
};

struct ScanResult {
  Matrix states;  // T x D
  ScanStats stats;
};

/// states[t] = (e_t o ... o e_0)(x0), computed with the blocked parallel scan.
ScanResult prefix_scan_affine(const AffineSequence& elems, std::span<const double> x0);
ScanResult prefix_scan_affine(std::span<const AffineElement> elems, std::span<const double> x0);

/// Backward counterpart: out[t] = c_t + a_t * out[t + 1], out[T-1] = c_{T-1}.
/// This is the shape of every adjoint recursion in the model.
ScanResult reverse_scan_affine(const AffineSequence& elems);

/// Cap for the OpenMP worker pool used by scans and batch loops (0 = runtime default).
void set_num_threads(int n);
int num_threads();

}  // namespace lrcssm
