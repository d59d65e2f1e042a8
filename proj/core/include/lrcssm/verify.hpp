#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/matrix.hpp"
#include "lrcssm/network.hpp"

namespace lrcssm {

/// Machine-checkable outcome of one verification with its witness values.
struct CheckReport {
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, double>> witnesses;
  std::string detail;

  double witness(std::string_view key) const;
  std::string to_json() const;
};

/// x_t = lambda_t * x_{t-1} + b_t with the coefficients treated as given.
struct CoefficientRun {
  Matrix lambda;  // T x D
  Matrix b;       // T x D
  Vector x0;
};

/// Coefficients realised along the actual rollout:
/// lambda_t = 1 + dt a_diag(x_{t-1}, u_t), b_t = dt b_vec(x_{t-1}, u_t).
/// Folding them reproduces the Euler trajectory exactly.
CoefficientRun coefficient_run(const LrcLayerParams& p, const Matrix& inputs, std::span<const double> x0,
                               const CellOptions& opts);

/// Draws one (lambda, b) pair per call.
using CoefficientSampler = std::function<std::pair<Vector, Vector>(std::mt19937_64&)>;

/// Samples (x, u) pairs and evaluates the coefficients at x.
CoefficientSampler model_coefficient_sampler(const LrcLayerParams& p, const CellOptions& opts);

/// One coefficient step contracts distances by at most rho_hat, the
/// largest |lambda| seen. Fails if any ratio exceeds rho_hat + 1e-12 or if
/// rho_hat >= 1. With a model, the full Euler step is also sampled and
/// reported (not asserted).
CheckReport verify_contraction(const CoefficientSampler& sampler, std::size_t dim, std::size_t trials,
                               std::uint64_t seed);
CheckReport verify_contraction(const LrcLayerParams& p, const CellOptions& opts, std::size_t trials,
                               std::uint64_t seed);

/// ||x_t|| <= rho^t ||x_0|| + (1 - rho^t)/(1 - rho) max_{s<=t} ||b_s|| at every t,
/// with rho the run's largest |lambda|. Fails if rho >= 1.
CheckReport verify_forward_bound(const CoefficientRun& run);
CheckReport verify_forward_bound(const LrcLayerParams& p, std::span<const double> x0, const Matrix& inputs,
                                 const CellOptions& opts);

struct DecayCurve {
  std::vector<std::size_t> taus;
  Vector adjoint_norm;  // ||adjoint(tau)||
  Vector bound;         // rho^{T - tau} ||adjoint(T)||
};

/// adjoint(tau) = (prod_{s > tau} lambda_s) seed over a run's per-step
/// Jacobian diagonals. The check is the geometric decay bound; rho_hat is
/// reported.
CheckReport verify_gradient_decay(const Matrix& lambdas, std::span<const double> seed,
                                  std::span<const std::size_t> taus, DecayCurve* curve = nullptr);

/// Stack of coefficient recurrences: the gradient through L layers, each a
/// product of its diagonal Jacobians over (tau, T], is bounded by
/// prod_l rho_l^{T - tau}.
CheckReport verify_deep_stack(std::span<const Matrix> layer_lambdas, std::span<const double> seed);

/// Closed-form multiply-add count of the LRC recurrence (forward + backward)
/// for B sequences of length T: c_f * B * T * D * L.
struct FlopModel {
  double c_forward = 0.0;   // per (b, t, d, l)
  double c_backward = 0.0;
  double c_f() const { return c_forward + c_backward; }
};

/// Per-(b,t,d,l) costs given the LRC input width and the expected number of
/// Newton iterations (0 = sequential rollout).
FlopModel flop_model(std::size_t lrc_input_dim, std::size_t newton_iters);

std::uint64_t flop_estimate(const ModelConfig& cfg, std::size_t length, std::size_t batch,
                            std::size_t newton_iters = 0);

struct RuntimeRow {
  std::size_t length = 0;
  int threads = 0;
  double sequential_ms = 0.0;
  double parallel_ms = 0.0;
  std::size_t newton_iters = 0;
  std::size_t max_scan_rounds = 0;
  std::size_t round_bound = 0;  // 2 ceil(log2 T)
  bool converged = false;
};

struct RuntimeOptions {
  std::size_t state_dim = 8;
  std::size_t input_dim = 4;
  std::size_t reps = 3;
  std::uint64_t seed = 0;
};

/// Best-of-`reps` wall time (after one discarded warm-up) of the
/// sequential rollout and the Newton-scan solve per (T, threads).
std::vector<RuntimeRow> runtime_scaling(std::span<const std::size_t> lengths, std::span<const int> threads,
                                        const RuntimeOptions& opts = {});

std::string runtime_csv(std::span<const RuntimeRow> rows);
std::string runtime_jsonl(std::span<const RuntimeRow> rows);

std::size_t ceil_log2(std::size_t n);

}  // namespace lrcssm
