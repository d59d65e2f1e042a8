#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/matrix.hpp"
#include "lrcssm/scan.hpp"

namespace lrcssm {

enum class SolverMode { sequential, newton_scan, elk_damped };

std::string_view to_string(SolverMode mode);
SolverMode parse_solver_mode(std::string_view text);

struct SolverConfig {
  double tol = 1e-9;
  std::size_t max_iters = 50;
  SolverMode mode = SolverMode::newton_scan;
  /// r / q of the damped least-squares step (elk_damped only). Large values
  /// approach the undamped Newton step.
  double trust_ratio = 1.0;

  void validate() const;
};

struct SolveReport {
  std::size_t iterations = 0;
  /// ||states_k - states_{k-1}||_inf, one entry per iteration.
  std::vector<double> residuals;
  bool converged = false;
  /// Barrier-separated phases summed over all scans of the solve.
  std::size_t sync_rounds = 0;
  /// Largest sync-round count of a single scan.
  std::size_t max_scan_rounds = 0;
};

/// Per-step affine surrogate x_t = j_t * x_{t-1} + c_t around a guess.
using Linearization = AffineSequence;

/// Ground truth: the Euler fold. Throws NumericError with the step index.
Matrix sequential_rollout(std::span<const double> x0, const Matrix& inputs, const LrcLayerParams& p,
                          const CellOptions& opts = {});
Matrix sequential_rollout(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                          const CellOptions& opts = {});

Linearization linearize(const Matrix& guess, std::span<const double> x0, const Matrix& inputs,
                        const LrcLayerParams& p, const CellOptions& opts = {});
Linearization linearize(const Matrix& guess, std::span<const double> x0, const InputDrive& drive,
                        const LrcLayerParams& p, const CellOptions& opts = {});

struct SolveResult {
  Matrix states;
  SolveReport report;
};

/// Parallel-in-time evaluation of the rollout. Iterates linearize -> scan
/// until the change between iterates is <= cfg.tol or cfg.max_iters is hit.
/// On non-convergence the last iterate is returned with converged = false.
/// A non-finite iterate throws NumericError.
SolveResult solve_parallel(std::span<const double> x0, const Matrix& inputs, const LrcLayerParams& p,
                           const CellOptions& opts, const SolverConfig& cfg,
                           const Matrix* init_guess = nullptr);
SolveResult solve_parallel(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                           const CellOptions& opts, const SolverConfig& cfg,
                           const Matrix* init_guess = nullptr);

/// Dispatches on cfg.mode; the sequential mode reports one iteration.
SolveResult solve(std::span<const double> x0, const InputDrive& drive, const LrcLayerParams& p,
                  const CellOptions& opts, const SolverConfig& cfg);

/// One damped step: per state dimension, minimises
///   sum_t (x_t - j_t x_{t-1} - c_t)^2 + (x_t - prev_t)^2 / trust_ratio
/// with x_{-1} = x0, by a parallel Kalman filter followed by a parallel
/// smoother (both associative scans).
ScanResult damped_affine_solve(const Linearization& lin, const Matrix& prev, std::span<const double> x0,
                               double trust_ratio);

}  // namespace lrcssm
