#pragma once

// Independent reference implementations used by the tests. Nothing here
// calls into the kernels under test.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/matrix.hpp"

namespace oracle {

using lrcssm::DependenceMode;
using lrcssm::LrcLayerParams;
using lrcssm::Matrix;
using lrcssm::Vector;

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct NaiveCell {
  Vector a;     // drift = a x + b
  Vector b;
  Vector next;
};

/// Straight transcription of the cell equations, one unit at a time.
inline NaiveCell naive_cell(const Vector& x, const Vector& u, const LrcLayerParams& p, double dt,
                            DependenceMode mode, std::optional<double> rho = {}) {
  const std::size_t D = x.size();
  NaiveCell out{Vector(D), Vector(D), Vector(D)};
  for (std::size_t i = 0; i < D; ++i) {
    double in_a = p.b_u_bias[i], in_w = p.v_u_bias[i];
    for (std::size_t j = 0; j < u.size(); ++j) {
      in_a += p.a_u(i, j) * u[j];
      in_w += p.w_u(i, j) * u[j];
    }
    const bool a_state = mode == DependenceMode::full;
    const bool b_state = mode != DependenceMode::input_only;
    const double ax_A = a_state ? p.a_x[i] : 0.0;
    const double wx_A = a_state ? p.w_x[i] : 0.0;
    const double wx_B = b_state ? p.w_x[i] : 0.0;
    const double kx_B = b_state ? p.k_max_x[i] : 0.0;

    const double su = sig(in_a);
    const double f = p.g_max_x[i] * sig(ax_A * x[i] + p.b_x[i]) + p.g_max_u[i] * su + p.g_leak[i];
    const double eps_A = wx_A * x[i] + p.v_x[i] + in_w;
    double g = sig(f) * sig(eps_A);
    if (rho) g = (1.0 - *rho) + g * (2.0 * *rho - 1.0);

    const double z = kx_B * sig(p.a_x[i] * x[i] + p.b_x[i]) + p.k_max_u[i] * su + p.g_leak[i];
    const double eps_B = wx_B * x[i] + p.v_x[i] + in_w;
    out.a[i] = -g;
    out.b[i] = std::tanh(z) * sig(eps_B) * p.e_leak[i];
    out.next[i] = x[i] + dt * (out.a[i] * x[i] + out.b[i]);
  }
  return out;
}

inline Matrix naive_rollout(const Vector& x0, const Matrix& inputs, const LrcLayerParams& p, double dt,
                            DependenceMode mode, std::optional<double> rho = {}) {
  Matrix out(inputs.rows(), x0.size());
  Vector x = x0;
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    const auto row = inputs.row(t);
    x = naive_cell(x, Vector(row.begin(), row.end()), p, dt, mode, rho).next;
    for (std::size_t i = 0; i < x.size(); ++i) out(t, i) = x[i];
  }
  return out;
}

/// x_t = a_t x_{t-1} + c_t folded left to right.
inline Matrix sequential_fold(const Matrix& a, const Matrix& c, const Vector& x0) {
  Matrix out(a.rows(), a.cols());
  Vector x = x0;
  for (std::size_t t = 0; t < a.rows(); ++t)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      x[i] = a(t, i) * x[i] + c(t, i);
      out(t, i) = x[i];
    }
  return out;
}

inline void fill_uniform(std::span<double> v, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : v) x = d(rng);
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  Matrix m(r, c);
  fill_uniform(m.flat(), rng, -scale, scale);
  return m;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  Vector v(n);
  fill_uniform(v, rng, -scale, scale);
  return v;
}

/// Every LRC parameter drawn from U(-scale, scale).
inline LrcLayerParams random_lrc(std::size_t D, std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  auto p = LrcLayerParams::zeros(D, n);
  p.for_each_array([&](std::string_view, std::span<double> a) { fill_uniform(a, rng, -scale, scale); });
  return p;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
