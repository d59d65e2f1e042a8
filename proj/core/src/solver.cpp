#include "lrcssm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lrcssm/errors.hpp"
#include "lrcssm/flops.hpp"

namespace lrcssm {

std::string_view to_string(SolverMode mode) {
  switch (mode) {
    case SolverMode::sequential: return "sequential";
    case SolverMode::newton_scan: return "newton_scan";
    case SolverMode::elk_damped: return "elk_damped";
  }
  return "?";
}

SolverMode parse_solver_mode(std::string_view text) {
  if (text == "sequential") return SolverMode::sequential;
  if (text == "newton_scan") return SolverMode::newton_scan;
  if (text == "elk_damped") return SolverMode::elk_damped;
  throw ConfigError("unknown solver mode '" + std::string(text) + "'");
}

void SolverConfig::validate() const {
  if (!(tol > 0.0) || !std::isfinite(tol)) throw ConfigError("solver tol must be > 0");
  if (max_iters < 1) throw ConfigError("solver max_iters must be >= 1");
  if (!(trust_ratio > 0.0) || !std::isfinite(trust_ratio)) throw ConfigError("solver trust_ratio must be > 0");
}

namespace {

void check_drive(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p) {
  if (x0.size() != p.state_dim()) throw ConfigError("x0 dimension does not match the layer state size");
  if (drive.pre_u.cols() != p.state_dim() || !drive.eps_u.same_shape(drive.pre_u))
    throw ConfigError("input drive shape does not match the layer");
  if (drive.pre_u.rows() == 0) throw ConfigError("sequence length must be >= 1");
}

bool parallel_rows(std::size_t T, std::size_t D) { return T * D >= 4096; }

std::size_t first_nonfinite_row(const Matrix& m) {
  for (std::size_t t = 0; t < m.rows(); ++t)
    for (double v : m.row(t))
      if (!std::isfinite(v)) return t;
  return m.rows();
}

}  // namespace

Matrix sequential_rollout(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                          const CellOptions& opts) {
  check_drive(x0, drive, p);
  opts.validate();
  const std::size_t T = drive.pre_u.rows();
  const std::size_t D = p.state_dim();
  Matrix states(T, D);
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    double x = x0[i];
    for (std::size_t t = 0; t < T; ++t) {
      x = kernel::unit_forward(c, x, drive.pre_u(t, i), drive.eps_u(t, i), opts).next;
      if (!std::isfinite(x)) throw NumericError("sequential rollout produced a non-finite state at step", t);
      states(t, i) = x;
    }
  }
  flops::add(flops::Phase::forward, T * D * flops::kCellEval);
  return states;
}

Matrix sequential_rollout(std::span<const double> x0, const Matrix& inputs, const LrcLayerParams& p,
                          const CellOptions& opts) {
  return sequential_rollout(x0, input_drive(inputs, p), p, opts);
}

Linearization linearize(const Matrix& guess, std::span<const double> x0, const InputDrive& drive,
                        const LrcLayerParams& p, const CellOptions& opts) {
  check_drive(x0, drive, p);
  const std::size_t T = drive.pre_u.rows();
  const std::size_t D = p.state_dim();
  if (guess.rows() != T || guess.cols() != D) throw ConfigError("linearize: guess must be T x D");
  Linearization lin{Matrix(T, D), Matrix(T, D)};
#pragma omp parallel for schedule(static) if (parallel_rows(T, D))
  for (std::ptrdiff_t ts = 0; ts < static_cast<std::ptrdiff_t>(T); ++ts) {
    const auto t = static_cast<std::size_t>(ts);
    for (std::size_t i = 0; i < D; ++i) {
      const auto c = kernel::unit_coeffs(p, i);
      const double s = t == 0 ? x0[i] : guess(t - 1, i);
      const auto fw = kernel::unit_forward(c, s, drive.pre_u(t, i), drive.eps_u(t, i), opts);
      const double j = kernel::unit_lambda(c, s, fw, opts);
      lin.a(t, i) = j;
      lin.c(t, i) = fw.next - j * s;
    }
  }
  flops::add(flops::Phase::forward,
             T * D * (flops::kCellEval + flops::kCellLambda + flops::kLinearizeOffset));
  return lin;
}

Linearization linearize(const Matrix& guess, std::span<const double> x0, const Matrix& inputs,
                        const LrcLayerParams& p, const CellOptions& opts) {
  return linearize(guess, x0, input_drive(inputs, p), p, opts);
}

ScanResult damped_affine_solve(const Linearization& lin, const Matrix& prev, std::span<const double> x0,
                               double trust_ratio) {
  const std::size_t T = lin.a.rows();
  const std::size_t D = lin.a.cols();
  if (!prev.same_shape(lin.a) || x0.size() != D) throw ConfigError("damped_affine_solve: shape mismatch");
  if (!(trust_ratio > 0.0)) throw ConfigError("damped_affine_solve: trust_ratio must be > 0");
  constexpr double q = 1.0;
  const double r = trust_ratio;

  // Filtering elements (A, b, C, eta, J) of the parallel Kalman filter.
  Matrix A(T, D), b(T, D), C(T, D), eta(T, D), J(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < D; ++i) {
      const double f = lin.a(t, i);
      const double u = lin.c(t, i);
      const double y = prev(t, i);
      if (t == 0) {
        const double m_pred = f * x0[i] + u;
        const double s = q + r;
        const double k = q / s;
        A(t, i) = 0.0;
        b(t, i) = m_pred + k * (y - m_pred);
        C(t, i) = q * (1.0 - k);
        eta(t, i) = 0.0;
        J(t, i) = 0.0;
      } else {
        const double s = q + r;
        const double k = q / s;
        A(t, i) = (1.0 - k) * f;
        b(t, i) = u + k * (y - u);
        C(t, i) = (1.0 - k) * q;
        eta(t, i) = f * (y - u) / s;
        J(t, i) = f * f / s;
      }
    }
  }
  double* pA = A.data();
  double* pb = b.data();
  double* pC = C.data();
  double* pe = eta.data();
  double* pJ = J.data();
  ScanStats st = inclusive_scan_indexed(T, [=](std::size_t e, std::size_t l) {
    for (std::size_t i = 0; i < D; ++i) {
      const std::size_t ie = e * D + i;
      const std::size_t il = l * D + i;
      const double Ae = pA[ie], be = pb[ie], Ce = pC[ie], ee = pe[ie], Je = pJ[ie];
      const double Al = pA[il], bl = pb[il], Cl = pC[il], el = pe[il], Jl = pJ[il];
      const double inv = 1.0 / (1.0 + Ce * Jl);
      pA[il] = Al * Ae * inv;
      pb[il] = Al * (be + Ce * el) * inv + bl;
      pC[il] = Al * Al * Ce * inv + Cl;
      pe[il] = Ae * (el - Jl * be) * inv + ee;
      pJ[il] = Ae * Ae * Jl * inv + Je;
    }
  });
  flops::add(flops::Phase::forward, (st.combines + T) * D * flops::kKalmanCompose);

  // Rauch-Tung-Striebel smoother as a reverse affine scan:
  // m_s[t] = g_t + E_t m_s[t+1].
  AffineSequence smooth{Matrix(T, D), Matrix(T, D)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < D; ++i) {
      const double m = b(t, i);
      if (t + 1 == T) {
        smooth.a(t, i) = 0.0;
        smooth.c(t, i) = m;
        continue;
      }
      const double P = C(t, i);
      const double f = lin.a(t + 1, i);
      const double u = lin.c(t + 1, i);
      const double G = P * f / (f * f * P + q);
      smooth.a(t, i) = G;
      smooth.c(t, i) = m - G * (f * m + u);
    }
  }
  auto res = reverse_scan_affine(smooth);
  flops::add(flops::Phase::forward, (res.stats.combines + T) * D * flops::kAffineCompose);
  res.stats += st;
  return res;
}

SolveResult solve_parallel(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                           const CellOptions& opts, const SolverConfig& cfg, const Matrix* init_guess) {
  cfg.validate();
  opts.validate();
  check_drive(x0, drive, p);
  if (cfg.mode == SolverMode::sequential) throw ConfigError("solve_parallel requires a parallel solver mode");
  const std::size_t T = drive.pre_u.rows();
  const std::size_t D = p.state_dim();

  Matrix states = init_guess ? *init_guess : Matrix(T, D);
  if (states.rows() != T || states.cols() != D) throw ConfigError("initial guess must be T x D");

  SolveResult out;
  Matrix best;
  double best_diff = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
    const Linearization lin = linearize(states, x0, drive, p, opts);
    ScanResult next;
    if (cfg.mode == SolverMode::newton_scan) {
      next = prefix_scan_affine(lin, x0);
      flops::add(flops::Phase::forward, (next.stats.combines + 1) * D * flops::kAffineCompose);
    } else {
      next = damped_affine_solve(lin, states, x0, cfg.trust_ratio);
    }
    const std::size_t bad = first_nonfinite_row(next.states);
    if (bad < T) throw NumericError("parallel solve produced a non-finite iterate at step", bad);

    const double diff = max_abs_diff(states.flat(), next.states.flat());
    out.report.residuals.push_back(diff);
    out.report.iterations = k;
    out.report.sync_rounds += next.stats.sync_rounds;
    out.report.max_scan_rounds = std::max(out.report.max_scan_rounds, next.stats.sync_rounds);
    states = std::move(next.states);
    if (diff <= cfg.tol) {
      out.report.converged = true;
      out.states = std::move(states);
      return out;
    }
    if (diff < best_diff) {
      best_diff = diff;
      best = states;
    }
  }
  out.states = best.empty() ? std::move(states) : std::move(best);
  return out;
}

SolveResult solve_parallel(std::span<const double> x0, const Matrix& inputs, const LrcLayerParams& p,
                           const CellOptions& opts, const SolverConfig& cfg, const Matrix* init_guess) {
  return solve_parallel(x0, input_drive(inputs, p), p, opts, cfg, init_guess);
}

SolveResult solve(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                  const CellOptions& opts, const SolverConfig& cfg) {
  if (cfg.mode != SolverMode::sequential) return solve_parallel(x0, drive, p, opts, cfg);
  SolveResult r;
  r.states = sequential_rollout(x0, drive, p, opts);
  r.report.iterations = 1;
  r.report.converged = true;
  return r;
}

}  // namespace lrcssm
