#pragma once

#include <span>
#include <vector>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/matrix.hpp"
#include "lrcssm/network.hpp"
#include "lrcssm/scan.hpp"

namespace lrcssm {

/// Gradients mirroring ModelParams, plus the gradient w.r.t. each block's
/// initial state (summed over the batch).
struct GradientSet {
  ModelParams params;
  std::vector<Vector> grad_x0;

  static GradientSet zeros(const ModelConfig& cfg);
};

struct StepGradient {
  Vector d_x_prev;        // D
  Vector d_u;             // n
  LrcLayerParams d_params;
};

/// Vector-Jacobian product of one euler_step evaluated at (x_prev, u).
StepGradient step_backward(std::span<const double> x_prev, std::span<const double> u, const LrcLayerParams& p,
                           const CellOptions& opts, std::span<const double> upstream);

/// adjoint[t] = (prod_{s > t} lambdas[s]) * seed, via a reverse affine scan.
/// Row t of `lambdas` is d x_t / d x_{t-1}.
Matrix adjoint_reverse_scan(const Matrix& lambdas, std::span<const double> seed, ScanStats* stats = nullptr);

/// Per-step diagonal Jacobians of a trajectory: row t = d x_t / d x_{t-1}.
Matrix trajectory_jacobians(const Matrix& states, std::span<const double> x0, const InputDrive& drive,
                            const LrcLayerParams& p, const CellOptions& opts);

/// Backward through an LRC layer run: `d_states` holds the direct
/// gradient on every state row. Accumulates parameter gradients into
/// `d_params`, writes input gradients (T x n) and returns d x0.
Vector lrc_backward(const Matrix& states, std::span<const double> x0, const Matrix& inputs,
                    const InputDrive& drive, const LrcLayerParams& p, const CellOptions& opts,
                    const Matrix& d_states, LrcLayerParams& d_params, Matrix& d_inputs);

/// Full-model reverse pass. Throws UsageError if the cache no longer
/// matches its parameters.
GradientSet model_backward(const ActivationCache& cache, const Matrix& d_logits);

/// Element-wise add `src` into `dst` (same shapes).
void accumulate(GradientSet& dst, const GradientSet& src);

}  // namespace lrcssm
