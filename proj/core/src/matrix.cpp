#include "lrcssm/matrix.hpp"

#include <cmath>

namespace lrcssm {

void affine_rows(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
  const std::size_t rows = in.rows();
  const std::size_t n_in = weight.cols();
  const std::size_t n_out = weight.rows();
  assert(in.cols() == n_in && bias.size() == n_out);
  if (out.rows() != rows || out.cols() != n_out) out = Matrix(rows, n_out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * n_in;
    double* y = out.data() + r * n_out;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* w = weight.data() + o * n_in;
      double acc = bias[o];
      for (std::size_t k = 0; k < n_in; ++k) acc += w[k] * x[k];
      y[o] = acc;
    }
  }
}

void matvec(const Matrix& weight, std::span<const double> x, std::span<double> y, bool accumulate) {
  assert(weight.cols() == x.size() && weight.rows() == y.size());
  for (std::size_t o = 0; o < weight.rows(); ++o) {
    const double* w = weight.data() + o * weight.cols();
    double acc = accumulate ? y[o] : 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += w[k] * x[k];
    y[o] = acc;
  }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (!(d <= m)) m = d;  // propagates NaN
  }
  return m;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace lrcssm
