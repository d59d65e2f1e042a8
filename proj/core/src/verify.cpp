#include "lrcssm/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "lrcssm/config.hpp"
#include "lrcssm/errors.hpp"
#include "lrcssm/flops.hpp"
#include "lrcssm/gradients.hpp"
#include "lrcssm/scan.hpp"
#include "lrcssm/solver.hpp"

namespace lrcssm {

namespace {

constexpr double kSlack = 1e-12;

std::string json_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.flat()) r = std::max(r, std::abs(v));
  return r;
}

Vector random_normal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

double CheckReport::witness(std::string_view key) const {
  for (const auto& [k, v] : witnesses)
    if (k == key) return v;
  throw UsageError("no witness named '" + std::string(key) + "'");
}

std::string CheckReport::to_json() const {
  std::ostringstream out;
  out << "{\"check\":\"" << json_escape(name) << "\",\"passed\":" << (passed ? "true" : "false") << ",\"witnesses\":{";
  for (std::size_t k = 0; k < witnesses.size(); ++k)
    out << (k ? "," : "") << "\"" << json_escape(witnesses[k].first) << "\":" << json_number(witnesses[k].second);
  out << "},\"detail\":\"" << json_escape(detail) << "\"}";
  return out.str();
}

CoefficientRun coefficient_run(const LrcLayerParams& p, const Matrix& inputs, std::span<const double> x0,
                               const CellOptions& opts) {
  p.validate();
  opts.validate();
  const std::size_t D = p.state_dim();
  if (x0.size() != D) throw ConfigError("coefficient_run: x0 must have state_dim entries");
  const InputDrive drive = input_drive(inputs, p);
  const std::size_t T = inputs.rows();
  CoefficientRun run{Matrix(T, D), Matrix(T, D), Vector(x0.begin(), x0.end())};
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    double x = x0[i];
    for (std::size_t t = 0; t < T; ++t) {
      const auto fw = kernel::unit_forward(c, x, drive.pre_u(t, i), drive.eps_u(t, i), opts);
      run.lambda(t, i) = 1.0 + opts.dt * fw.a;
      run.b(t, i) = opts.dt * fw.b;
      x = fw.next;
    }
  }
  return run;
}

CoefficientSampler model_coefficient_sampler(const LrcLayerParams& p, const CellOptions& opts) {
  p.validate();
  opts.validate();
  return [p, opts](std::mt19937_64& rng) {
    const Vector x = random_normal(p.state_dim(), rng);
    const Vector u = random_normal(p.input_dim(), rng);
    Vector lam = a_diag(x, u, p, opts);
    Vector b = b_vec(x, u, p, opts);
    for (auto& v : lam) v = 1.0 + opts.dt * v;
    for (auto& v : b) v *= opts.dt;
    return std::pair{std::move(lam), std::move(b)};
  };
}

CheckReport verify_contraction(const CoefficientSampler& sampler, std::size_t dim, std::size_t trials,
                               std::uint64_t seed) {
  CheckReport r{"contraction", false, {}, {}};
  std::mt19937_64 rng(seed);
  double rho_hat = 0.0;
  double max_ratio = 0.0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  std::vector<double> ratios;
  std::vector<double> rhos;
  for (std::size_t k = 0; k < trials; ++k) {
    auto [lam, b] = sampler(rng);
    if (lam.size() != dim || b.size() != dim) throw UsageError("coefficient sampler returned the wrong dimension");
    const Vector x = random_normal(dim, rng);
    const Vector y = random_normal(dim, rng);
    Vector xs(dim), ys(dim);
    double trial_rho = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      xs[i] = lam[i] * x[i] + b[i];
      ys[i] = lam[i] * y[i] + b[i];
      trial_rho = std::max(trial_rho, std::abs(lam[i]));
    }
    const double d0 = dist(x, y);
    const double ratio = d0 > 0.0 ? dist(xs, ys) / d0 : 0.0;
    ratios.push_back(ratio);
    rho_hat = std::max(rho_hat, trial_rho);
    max_ratio = std::max(max_ratio, ratio);
  }
  for (double ratio : ratios) worst_excess = std::max(worst_excess, ratio - rho_hat);
  const bool bounded = trials == 0 || worst_excess <= kSlack;
  r.passed = bounded && rho_hat < 1.0;
  r.witnesses = {{"trials", static_cast<double>(trials)},
                 {"rho_hat", rho_hat},
                 {"max_ratio", max_ratio},
                 {"worst_excess", trials ? worst_excess : 0.0}};
  if (!bounded) r.detail = "a step expanded distances by more than rho_hat";
  else if (!(rho_hat < 1.0)) r.detail = "rho_hat >= 1: the coefficient recurrence is not contractive";
  return r;
}

CheckReport verify_contraction(const LrcLayerParams& p, const CellOptions& opts, std::size_t trials,
                               std::uint64_t seed) {
  CheckReport r = verify_contraction(model_coefficient_sampler(p, opts), p.state_dim(), trials, seed);
  // full nonlinear step, reported only
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  double full_max = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Vector x = random_normal(p.state_dim(), rng);
    const Vector y = random_normal(p.state_dim(), rng);
    const Vector u = random_normal(p.input_dim(), rng);
    const double d0 = dist(x, y);
    if (d0 > 0.0) full_max = std::max(full_max, dist(euler_step(x, u, p, opts), euler_step(y, u, p, opts)) / d0);
  }
  r.witnesses.emplace_back("full_step_max_ratio", full_max);
  return r;
}

CheckReport verify_forward_bound(const CoefficientRun& run) {
  CheckReport r{"forward_bound", false, {}, {}};
  const std::size_t T = run.lambda.rows();
  const std::size_t D = run.lambda.cols();
  if (!run.b.same_shape(run.lambda) || run.x0.size() != D) throw UsageError("coefficient run shapes disagree");
  const double rho = max_abs(run.lambda);
  const double x0_norm = norm2(run.x0);
  Vector x = run.x0;
  double max_b = 0.0;
  double worst_ratio = 0.0;
  std::size_t violations = 0;
  std::size_t first_violation = 0;
  double rho_t = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < D; ++i) x[i] = run.lambda(t, i) * x[i] + run.b(t, i);
    max_b = std::max(max_b, norm2(run.b.row(t)));
    rho_t *= rho;
    const double geom = rho == 1.0 ? static_cast<double>(t + 1) : (1.0 - rho_t) / (1.0 - rho);
    const double bound = rho_t * x0_norm + geom * max_b;
    const double xn = norm2(x);
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, xn / bound);
    if (xn > bound * (1.0 + kSlack) + kSlack) {
      if (violations++ == 0) first_violation = t + 1;
    }
  }
  r.passed = violations == 0 && rho < 1.0;
  r.witnesses = {{"steps", static_cast<double>(T)},
                 {"rho_hat", rho},
                 {"max_b_norm", max_b},
                 {"worst_norm_to_bound", worst_ratio},
                 {"violations", static_cast<double>(violations)}};
  if (violations) r.detail = "bound violated first at t=" + std::to_string(first_violation);
  else if (!(rho < 1.0)) r.detail = "rho_hat >= 1: no uniform bound";
  return r;
}

CheckReport verify_forward_bound(const LrcLayerParams& p, std::span<const double> x0, const Matrix& inputs,
                                 const CellOptions& opts) {
  return verify_forward_bound(coefficient_run(p, inputs, x0, opts));
}

CheckReport verify_gradient_decay(const Matrix& lambdas, std::span<const double> seed,
                                  std::span<const std::size_t> taus, DecayCurve* curve) {
  CheckReport r{"gradient_decay", false, {}, {}};
  const std::size_t T = lambdas.rows();
  if (T == 0) throw UsageError("gradient decay needs a non-empty run");
  const Matrix adj = adjoint_reverse_scan(lambdas, seed);
  const double rho = max_abs(lambdas);
  const double top = norm2(seed);

  std::vector<std::size_t> all;
  if (taus.empty()) {
    for (std::size_t tau = 1; tau <= T; ++tau) all.push_back(tau);
    taus = all;
  }
  DecayCurve local;
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  for (auto tau : taus) {
    if (tau < 1 || tau > T) throw UsageError("tau must lie in [1, T]");
    const double n = norm2(adj.row(tau - 1));
    const double bound = std::pow(rho, static_cast<double>(T - tau)) * top;
    local.taus.push_back(tau);
    local.adjoint_norm.push_back(n);
    local.bound.push_back(bound);
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, n / bound);
    if (n > bound * (1.0 + kSlack) + 1e-300) ++violations;
  }
  r.passed = violations == 0 && rho < 1.0;
  r.witnesses = {{"steps", static_cast<double>(T)},
                 {"rho_hat", rho},
                 {"taus_checked", static_cast<double>(local.taus.size())},
                 {"worst_norm_to_bound", worst_ratio},
                 {"violations", static_cast<double>(violations)}};
  if (violations) r.detail = "adjoint exceeded its geometric bound";
  else if (!(rho < 1.0)) r.detail = "rho_hat >= 1: gradients need not decay";
  if (curve) *curve = std::move(local);
  return r;
}

CheckReport verify_deep_stack(std::span<const Matrix> layer_lambdas, std::span<const double> seed) {
  CheckReport r{"deep_stack", false, {}, {}};
  if (layer_lambdas.empty()) throw UsageError("deep stack needs at least one layer");
  const std::size_t T = layer_lambdas.front().rows();
  const std::size_t D = layer_lambdas.front().cols();
  if (seed.size() != D) throw UsageError("seed dimension mismatch");
  Matrix prod(T, D);
  prod.fill(1.0);
  double rho_prod = 1.0;
  const Vector ones(D, 1.0);
  for (const auto& lam : layer_lambdas) {
    if (lam.rows() != T || lam.cols() != D) throw UsageError("all layers must share T x D");
    const Matrix p = adjoint_reverse_scan(lam, ones);
    for (std::size_t k = 0; k < prod.size(); ++k) prod.data()[k] *= p.data()[k];
    rho_prod *= max_abs(lam);
  }
  const double top = norm2(seed);
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  Vector g(D);
  for (std::size_t tau = 1; tau <= T; ++tau) {
    for (std::size_t i = 0; i < D; ++i) g[i] = prod(tau - 1, i) * seed[i];
    const double n = norm2(g);
    const double bound = std::pow(rho_prod, static_cast<double>(T - tau)) * top;
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, n / bound);
    if (n > bound * (1.0 + kSlack) + 1e-300) ++violations;
  }
  r.passed = violations == 0 && rho_prod < 1.0;
  r.witnesses = {{"layers", static_cast<double>(layer_lambdas.size())},
                 {"steps", static_cast<double>(T)},
                 {"rho_product", rho_prod},
                 {"worst_norm_to_bound", worst_ratio},
                 {"violations", static_cast<double>(violations)}};
  if (violations) r.detail = "stacked adjoint exceeded the product bound";
  return r;
}

FlopModel flop_model(std::size_t n, std::size_t newton_iters) {
  using namespace flops;
  FlopModel m;
  const double drive = 2.0 * static_cast<double>(n);
  const double per_iter = static_cast<double>(kCellEval + kCellLambda + kLinearizeOffset + 2 * kAffineCompose);
  m.c_forward = drive + (newton_iters == 0 ? static_cast<double>(kCellEval)
                                           : static_cast<double>(newton_iters) * per_iter);
  m.c_backward = static_cast<double>(kCellEval + kCellLambda + kCellBackward + 2 * kAffineCompose) +
                 4.0 * static_cast<double>(n);
  return m;
}

std::uint64_t flop_estimate(const ModelConfig& cfg, std::size_t length, std::size_t batch,
                            std::size_t newton_iters) {
  const std::size_t iters = cfg.solver.mode == SolverMode::sequential ? 0 : newton_iters;
  const FlopModel m = flop_model(cfg.hidden_dim, iters);
  const auto c_f = static_cast<std::uint64_t>(std::llround(m.c_f()));
  return c_f * batch * length * cfg.state_dim * cfg.num_blocks;
}

std::size_t ceil_log2(std::size_t n) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

std::vector<RuntimeRow> runtime_scaling(std::span<const std::size_t> lengths, std::span<const int> threads,
                                        const RuntimeOptions& opts) {
  using clock = std::chrono::steady_clock;
  const int saved = num_threads();
  std::mt19937_64 rng(opts.seed);
  const LrcLayerParams p = init_lrc_params(opts.state_dim, opts.input_dim, rng);
  const CellOptions cell;
  const SolverConfig solver;
  const Vector x0(opts.state_dim, 0.0);
  const std::size_t reps = std::max<std::size_t>(opts.reps, 1);

  std::vector<RuntimeRow> rows;
  for (auto T : lengths) {
    Matrix inputs(T, opts.input_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : inputs.flat()) v = normal(rng);
    const InputDrive drive = input_drive(inputs, p);
    for (int th : threads) {
      set_num_threads(th);
      RuntimeRow row;
      row.length = T;
      row.threads = th;
      row.round_bound = 2 * ceil_log2(T);
      auto time_best = [&](auto&& fn) {
        fn();  // warm-up
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < reps; ++k) {
          const auto t0 = clock::now();
          fn();
          best = std::min(best, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
        return best;
      };
      row.sequential_ms = time_best([&] { return sequential_rollout(x0, drive, p, cell); });
      SolveResult last;
      row.parallel_ms = time_best([&] { last = solve_parallel(x0, drive, p, cell, solver); });
      row.newton_iters = last.report.iterations;
      row.max_scan_rounds = last.report.max_scan_rounds;
      row.converged = last.report.converged;
      rows.push_back(row);
    }
  }
  set_num_threads(saved);
  return rows;
}

std::string runtime_csv(std::span<const RuntimeRow> rows) {
  std::ostringstream out;
  out << "length,threads,sequential_ms,parallel_ms,newton_iters,max_scan_rounds,round_bound,converged\n";
  for (const auto& r : rows)
    out << r.length << ',' << r.threads << ',' << format_double(r.sequential_ms) << ',' << format_double(r.parallel_ms)
        << ',' << r.newton_iters << ',' << r.max_scan_rounds << ',' << r.round_bound << ','
        << (r.converged ? "true" : "false") << "\n";
  return out.str();
}

std::string runtime_jsonl(std::span<const RuntimeRow> rows) {
  std::ostringstream out;
  for (const auto& r : rows)
    out << "{\"length\":" << r.length << ",\"threads\":" << r.threads
        << ",\"sequential_ms\":" << json_number(r.sequential_ms) << ",\"parallel_ms\":" << json_number(r.parallel_ms)
        << ",\"newton_iters\":" << r.newton_iters << ",\"max_scan_rounds\":" << r.max_scan_rounds
        << ",\"round_bound\":" << r.round_bound << ",\"converged\":" << (r.converged ? "true" : "false") << "}\n";
  return out.str();
}

}  // namespace lrcssm
