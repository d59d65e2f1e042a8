#include "lrcssm/lrc_dynamics.hpp"

#include <cmath>
#include <string>

#include "lrcssm/errors.hpp"

namespace lrcssm {

std::string_view to_string(DependenceMode mode) {
  switch (mode) {
    case DependenceMode::full: return "full";
    case DependenceMode::a_input_only: return "a_input_only";
    case DependenceMode::input_only: return "input_only";
  }
  return "?";
}

DependenceMode parse_dependence_mode(std::string_view text) {
  if (text == "full") return DependenceMode::full;
  if (text == "a_input_only") return DependenceMode::a_input_only;
  if (text == "input_only") return DependenceMode::input_only;
  throw ConfigError("unknown dependence mode '" + std::string(text) + "'");
}

LrcLayerParams LrcLayerParams::zeros(std::size_t state_dim, std::size_t input_dim) {
  LrcLayerParams p;
  for (Vector* v : {&p.g_max_x, &p.g_max_u, &p.k_max_x, &p.k_max_u, &p.a_x, &p.b_x, &p.b_u_bias, &p.g_leak,
                    &p.e_leak, &p.w_x, &p.v_x, &p.v_u_bias})
    v->assign(state_dim, 0.0);
  p.a_u = Matrix(state_dim, input_dim);
  p.w_u = Matrix(state_dim, input_dim);
  return p;
}

void LrcLayerParams::validate() const {
  const std::size_t d = state_dim();
  const std::size_t n = input_dim();
  for_each_array([&](std::string_view name, std::span<const double> arr) {
    const bool matrix = name == "a_u" || name == "w_u";
    const std::size_t want = matrix ? d * n : d;
    if (arr.size() != want)
      throw ConfigError("LRC parameter '" + std::string(name) + "' has " + std::to_string(arr.size()) +
                        " entries, expected " + std::to_string(want));
    for (double v : arr)
      if (!std::isfinite(v)) throw ConfigError("LRC parameter '" + std::string(name) + "' is not finite");
  });
  if (a_u.rows() != d || w_u.rows() != d || w_u.cols() != n)
    throw ConfigError("LRC input weight matrices must be D x n");
}

void CellOptions::validate() const {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be finite and non-negative");
  if (rho_clamp && !(*rho_clamp > 0.5 && *rho_clamp < 1.0))
    throw ConfigError("rho_clamp must lie in (0.5, 1)");
}

namespace {

void check_shapes(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p) {
  if (x.size() != p.state_dim())
    throw ConfigError("state has " + std::to_string(x.size()) + " entries, layer expects " +
                      std::to_string(p.state_dim()));
  if (u.size() != p.input_dim())
    throw ConfigError("input has " + std::to_string(u.size()) + " entries, layer expects " +
                      std::to_string(p.input_dim()));
  if (p.w_u.cols() != p.input_dim() || p.a_u.rows() != p.state_dim() || p.w_u.rows() != p.state_dim())
    throw ConfigError("inconsistent LRC parameter shapes");
}

struct UnitDrive {
  double pre_u;
  double eps_u;
};

UnitDrive unit_drive(const LrcLayerParams& p, std::span<const double> u, std::size_t i) {
  const auto ar = p.a_u.row(i);
  const auto wr = p.w_u.row(i);
  double pre = 0.0;
  double eps = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    pre += ar[j] * u[j];
    eps += wr[j] * u[j];
  }
  return {pre + p.b_u_bias[i], eps + p.v_u_bias[i]};
}

template <class F>
Vector map_units(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
                 const CellOptions& opts, F&& f) {
  check_shapes(x, u, p);
  opts.validate();
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    const auto d = unit_drive(p, u, i);
    const auto fw = kernel::unit_forward(c, x[i], d.pre_u, d.eps_u, opts);
    out[i] = f(c, x[i], fw);
  }
  return out;
}

}  // namespace

GateValues gates(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p) {
  check_shapes(x, u, p);
  GateValues g{Vector(x.size()), Vector(x.size()), Vector(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    const auto d = unit_drive(p, u, i);
    const auto fw = kernel::unit_forward(c, x[i], d.pre_u, d.eps_u, CellOptions{});
    g.f_star[i] = fw.f;
    g.z_star[i] = fw.z;
    g.eps_star[i] = fw.e_a;
  }
  return g;
}

Vector drift(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
             const CellOptions& opts) {
  return map_units(x, u, p, opts, [](const auto&, double xi, const kernel::UnitForward& fw) {
    return fw.a * xi + fw.b;
  });
}

Vector a_diag(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
              const CellOptions& opts) {
  return map_units(x, u, p, opts, [](const auto&, double, const kernel::UnitForward& fw) { return fw.a; });
}

Vector b_vec(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
             const CellOptions& opts) {
  return map_units(x, u, p, opts, [](const auto&, double, const kernel::UnitForward& fw) { return fw.b; });
}

Vector euler_step(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
                  const CellOptions& opts) {
  Vector out = map_units(x, u, p, opts, [](const auto&, double, const kernel::UnitForward& fw) { return fw.next; });
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!std::isfinite(out[i])) throw NumericError("euler_step produced a non-finite state", i);
  return out;
}

Vector step_jacobian_diag(std::span<const double> x, std::span<const double> u, const LrcLayerParams& p,
                          const CellOptions& opts) {
  return map_units(x, u, p, opts, [&](const kernel::UnitCoeffs& c, double xi, const kernel::UnitForward& fw) {
    return kernel::unit_lambda(c, xi, fw, opts);
  });
}

InputDrive input_drive(const Matrix& inputs, const LrcLayerParams& p) {
  if (inputs.cols() != p.input_dim())
    throw ConfigError("inputs have " + std::to_string(inputs.cols()) + " channels, layer expects " +
                      std::to_string(p.input_dim()));
  InputDrive d{Matrix(inputs.rows(), p.state_dim()), Matrix(inputs.rows(), p.state_dim())};
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    const auto u = inputs.row(t);
    for (std::size_t i = 0; i < p.state_dim(); ++i) {
      const auto ud = unit_drive(p, u, i);
      d.pre_u(t, i) = ud.pre_u;
      d.eps_u(t, i) = ud.eps_u;
    }
  }
  return d;
}

}  // namespace lrcssm
