#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "lrcssm/matrix.hpp"

namespace lrcssm {

/// Which terms of the transition see the state. `a_input_only` gives
/// A(u) with b(x, u); `input_only` gives A(u) with b(u).
enum class DependenceMode { full, a_input_only, input_only };

std::string_view to_string(DependenceMode mode);
DependenceMode parse_dependence_mode(std::string_view text);

/// Learnable parameters of one LRC layer with D state units and n inputs.
/// State-branch terms are per unit (self loops only), so the one-step
/// Jacobian is diagonal by construction.
struct LrcLayerParams {
  Vector g_max_x;   // D
  Vector g_max_u;   // D
  Vector k_max_x;   // D
  Vector k_max_u;   // D
  Vector a_x;       // D
  Vector b_x;       // D
  Matrix a_u;       // D x n
  Vector b_u_bias;  // D
  Vector g_leak;    // D
  Vector e_leak;    // D
  Vector w_x;       // D
  Vector v_x;       // D
  Matrix w_u;       // D x n
  Vector v_u_bias;  // D

  static LrcLayerParams zeros(std::size_t state_dim, std::size_t input_dim);

  std::size_t state_dim() const noexcept { return g_max_x.size(); }
  std::size_t input_dim() const noexcept { return a_u.cols(); }

  /// Throws ConfigError on inconsistent shapes or non-finite entries.
  void validate() const;

  template <class F>
  void for_each_array(F&& f) {
    visit_arrays(*this, f);
  }
  template <class F>
  void for_each_array(F&& f) const {
    visit_arrays(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_arrays(Self& self, F& f) {
    f("g_max_x", std::span(self.g_max_x));
    f("g_max_u", std::span(self.g_max_u));
    f("k_max_x", std::span(self.k_max_x));
    f("k_max_u", std::span(self.k_max_u));
    f("a_x", std::span(self.a_x));
    f("b_x", std::span(self.b_x));
    f("a_u", self.a_u.flat());
    f("b_u_bias", std::span(self.b_u_bias));
    f("g_leak", std::span(self.g_leak));
    f("e_leak", std::span(self.e_leak));
    f("w_x", std::span(self.w_x));
    f("v_x", std::span(self.v_x));
    f("w_u", self.w_u.flat());
    f("v_u_bias", std::span(self.v_u_bias));
  }
};

/// Pre-squash gate values f*, z*, eps* (full dependence).
struct GateValues {
  Vector f_star;
  Vector z_star;
  Vector eps_star;
};

struct CellOptions {
  double dt = 1.0;
  DependenceMode mode = DependenceMode::full;
  /// When set to rho in (0.5, 1), the decay product g = sigma(f*)sigma(eps*)
  /// is remapped to (1 - rho) + g (2 rho - 1), so with dt = 1 the
  /// coefficient 1 - g lies in [1 - rho, rho].
  std::optional<double> rho_clamp;

  void validate() const;
};

GateValues gates(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p);

/// dx/dt = a_diag(x, u) * x + b_vec(x, u).
Vector drift(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
             const CellOptions& opts = {});
Vector a_diag(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
              const CellOptions& opts = {});
Vector b_vec(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
             const CellOptions& opts = {});

/// x + dt * drift. Throws NumericError (index = state coordinate) on a
/// non-finite result.
Vector euler_step(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
                  const CellOptions& opts = {});

/// Diagonal of d euler_step / dx. Off-diagonal entries are identically zero.
Vector step_jacobian_diag(std::span<const double> x, std::span<const double> u,
                          const LrcLayerParams& p, const CellOptions& opts = {});

/// State-independent input pre-activations for a whole sequence:
/// pre_u(t, i) = (a_u u_t)_i + b_u_bias_i and eps_u(t, i) = (w_u u_t)_i + v_u_bias_i.
struct InputDrive {
  Matrix pre_u;  // T x D
  Matrix eps_u;  // T x D
};

InputDrive input_drive(const Matrix& inputs, const LrcLayerParams& p);

namespace kernel {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Scalar parameters of unit i.
struct UnitCoeffs {
  double gx, gu, kx, ku, ax, bx, gl, el, wx, vx;
};

inline UnitCoeffs unit_coeffs(const LrcLayerParams& p, std::size_t i) {
  return {p.g_max_x[i], p.g_max_u[i], p.k_max_x[i], p.k_max_u[i], p.a_x[i],
          p.b_x[i],     p.g_leak[i],  p.e_leak[i],  p.w_x[i],     p.v_x[i]};
}

/// Every intermediate of one unit's Euler step. The "A" quantities feed
/// the diagonal transition, the "B" quantities the offset; they coincide
/// in full dependence mode.
struct UnitForward {
  double sx_a, sx_b, su;
  double f, z, e_a, e_b;
  double sf, se_a, se_b, tz;
  double decay;  // clamped sigma(f*) sigma(eps*)
  double a, b;   // drift = a x + b
  double next;
};

inline UnitForward unit_forward(const UnitCoeffs& c, double x, double pre_u, double eps_u,
                                const CellOptions& o) {
  const bool state_a = o.mode == DependenceMode::full;
  const bool state_b = o.mode != DependenceMode::input_only;
  const double ax_a = state_a ? c.ax : 0.0;
  const double wx_a = state_a ? c.wx : 0.0;
  const double kx_b = state_b ? c.kx : 0.0;
  const double wx_b = state_b ? c.wx : 0.0;

  UnitForward r{};
  r.sx_a = sigmoid(ax_a * x + c.bx);
  r.sx_b = state_a ? r.sx_a : sigmoid(c.ax * x + c.bx);
  r.su = sigmoid(pre_u);
  r.f = c.gx * r.sx_a + c.gu * r.su + c.gl;
  r.z = kx_b * r.sx_b + c.ku * r.su + c.gl;
  r.e_a = wx_a * x + c.vx + eps_u;
  r.e_b = state_a ? r.e_a : wx_b * x + c.vx + eps_u;
  r.sf = sigmoid(r.f);
  r.se_a = sigmoid(r.e_a);
  r.se_b = state_a ? r.se_a : sigmoid(r.e_b);
  r.tz = std::tanh(r.z);
  const double g = r.sf * r.se_a;
  r.decay = o.rho_clamp ? (1.0 - *o.rho_clamp) + g * (2.0 * *o.rho_clamp - 1.0) : g;
  r.a = -r.decay;
  r.b = r.tz * r.se_b * c.el;
  r.next = x + o.dt * (r.a * x + r.b);
  return r;
}

/// Reverse-mode partials of one unit's Euler step, scaled by `upstream`.
struct UnitGrad {
  double dx;  // d next / d x (times upstream)
  double dpre_u, deps_u;
  double dgx, dgu, dkx, dku, dax, dbx, dgl, del, dwx, dvx;
};

inline UnitGrad unit_backward(const UnitCoeffs& c, double x, const UnitForward& fw,
                              const CellOptions& o, double upstream) {
  const bool state_a = o.mode == DependenceMode::full;
  const bool state_b = o.mode != DependenceMode::input_only;
  const double kx_b = state_b ? c.kx : 0.0;
  const double q = upstream * o.dt;

  double d_decay = -q * x;
  if (o.rho_clamp) d_decay *= 2.0 * *o.rho_clamp - 1.0;
  const double d_sf = d_decay * fw.se_a;
  const double d_se_a = d_decay * fw.sf;
  const double d_tz = q * fw.se_b * c.el;
  const double d_se_b = q * fw.tz * c.el;

  const double df = d_sf * fw.sf * (1.0 - fw.sf);
  const double de_a = d_se_a * fw.se_a * (1.0 - fw.se_a);
  const double de_b = d_se_b * fw.se_b * (1.0 - fw.se_b);
  const double dz = d_tz * (1.0 - fw.tz * fw.tz);

  UnitGrad g{};
  g.del = q * fw.tz * fw.se_b;
  g.dgx = df * fw.sx_a;
  g.dgu = df * fw.su;
  g.dgl = df + dz;
  g.dku = dz * fw.su;
  g.dkx = state_b ? dz * fw.sx_b : 0.0;

  const double d_su = df * c.gu + dz * c.ku;
  g.dpre_u = d_su * fw.su * (1.0 - fw.su);

  const double dpre_a = df * c.gx * fw.sx_a * (1.0 - fw.sx_a);
  const double dpre_b = dz * kx_b * fw.sx_b * (1.0 - fw.sx_b);
  g.dbx = dpre_a + dpre_b;
  g.dax = (state_a ? dpre_a * x : 0.0) + dpre_b * x;

  g.dvx = de_a + de_b;
  g.deps_u = de_a + de_b;
  g.dwx = (state_a ? de_a * x : 0.0) + (state_b ? de_b * x : 0.0);

  g.dx = upstream * (1.0 + o.dt * fw.a) + (state_a ? dpre_a * c.ax + de_a * c.wx : 0.0) +
         dpre_b * c.ax + (state_b ? de_b * c.wx : 0.0);
  return g;
}

/// d next / d x for one unit.
inline double unit_lambda(const UnitCoeffs& c, double x, const UnitForward& fw, const CellOptions& o) {
  const bool state_a = o.mode == DependenceMode::full;
  const bool state_b = o.mode != DependenceMode::input_only;
  double lambda = 1.0 + o.dt * fw.a;
  if (state_a) {
    double d_decay = -o.dt * x;
    if (o.rho_clamp) d_decay *= 2.0 * *o.rho_clamp - 1.0;
    const double df = d_decay * fw.se_a * fw.sf * (1.0 - fw.sf);
    const double de_a = d_decay * fw.sf * fw.se_a * (1.0 - fw.se_a);
    lambda += df * c.gx * fw.sx_a * (1.0 - fw.sx_a) * c.ax + de_a * c.wx;
  }
  if (state_b) {
    const double dz = o.dt * fw.se_b * c.el * (1.0 - fw.tz * fw.tz);
    const double de_b = o.dt * fw.tz * c.el * fw.se_b * (1.0 - fw.se_b);
    lambda += dz * c.kx * fw.sx_b * (1.0 - fw.sx_b) * c.ax + de_b * c.wx;
  }
  return lambda;
}

}  // namespace kernel
}  // namespace lrcssm
