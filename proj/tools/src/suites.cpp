#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "lrcssm/cli.hpp"
#include "lrcssm/gradients.hpp"
#include "lrcssm/scan.hpp"
#include "lrcssm/solver.hpp"

namespace lrcssm::cli {
namespace {

Matrix normal_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.flat()) v = normal(rng);
  return m;
}

Vector normal_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

CheckReport expanding_fixture(std::uint64_t seed) {
  // lambda = 1.05 everywhere: every stability bound must reject it
  const double lambda = 1.05;
  auto sampler = [lambda](std::mt19937_64& rng) {
    return std::make_pair(Vector(4, lambda), normal_vector(4, rng));
  };
  auto r = verify_contraction(sampler, 4, 1000, seed);
  r.name = "contraction_unstable_fixture";
  const auto decay = verify_gradient_decay(Matrix(64, 4, lambda), Vector(4, 1.0), {});
  r.passed = r.passed && decay.passed;
  return r;
}

void stability(const SuiteOptions& o, std::vector<CheckReport>& out) {
  std::mt19937_64 rng(o.seed + 101);
  const CellOptions opts{};

  auto zero = verify_contraction(LrcLayerParams::zeros(8, 4), opts, 1000, o.seed);
  zero.name = "contraction_zero_params";
  zero.passed = zero.passed && zero.witness("rho_hat") == 0.75;
  out.push_back(zero);

  const auto layer = init_lrc_params(8, 8, rng);
  auto contraction = verify_contraction(layer, opts, 10000, o.seed);
  contraction.name = "contraction_default_init";
  out.push_back(contraction);

  const auto inputs = normal_matrix(2048, 8, rng);
  auto bound = verify_forward_bound(layer, normal_vector(8, rng), inputs, opts);
  bound.name = "forward_bound_T2048";
  out.push_back(bound);

  const auto run = coefficient_run(layer, normal_matrix(512, 8, rng), Vector(8, 0.0), opts);
  auto decay = verify_gradient_decay(run.lambda, Vector(8, 1.0), {});
  decay.name = "gradient_decay_T512";
  out.push_back(decay);

  std::vector<Matrix> layers;
  for (int l = 0; l < 4; ++l) {
    const auto p = init_lrc_params(8, 8, rng);
    layers.push_back(coefficient_run(p, normal_matrix(256, 8, rng), Vector(8, 0.0), opts).lambda);
  }
  auto deep = verify_deep_stack(layers, Vector(8, 1.0));
  deep.name = "deep_stack_L4";
  out.push_back(deep);

  if (o.unstable_fixture) out.push_back(expanding_fixture(o.seed));
}

void solver(const SuiteOptions& o, std::vector<CheckReport>& out) {
  std::mt19937_64 rng(o.seed + 202);
  SolverConfig cfg;
  cfg.tol = 1e-9;
  cfg.max_iters = 100;

  CheckReport eq{"newton_matches_rollout", true, {}, ""};
  CheckReport one{"fixed_point_one_shot", true, {}, ""};
  double worst = 0.0, worst_one = 0.0, max_iters = 0.0;
  std::size_t instances = 0;
  for (std::size_t D : {1, 4, 8})
    for (std::size_t T : {1, 2, 33, 1024, 4096}) {
      const auto p = init_lrc_params(D, 4, rng);
      const auto u = normal_matrix(T, 4, rng);
      const Vector x0(D, 0.0);
      const auto ref = sequential_rollout(x0, u, p);
      const auto res = solve_parallel(x0, u, p, {}, cfg);
      worst = std::max(worst, max_abs_diff(res.states.flat(), ref.flat()));
      max_iters = std::max(max_iters, static_cast<double>(res.report.iterations));
      eq.passed = eq.passed && res.report.converged;
      const auto warm = solve_parallel(x0, u, p, {}, cfg, &ref);
      worst_one = std::max(worst_one, warm.report.residuals.empty() ? 0.0 : warm.report.residuals.back());
      one.passed = one.passed && warm.report.iterations == 1;
      ++instances;
    }
  eq.passed = eq.passed && worst <= 1e-8;
  eq.witnesses = {{"instances", static_cast<double>(instances)}, {"max_inf_error", worst}, {"max_iterations", max_iters}};
  one.passed = one.passed && worst_one <= 1e-12;
  one.witnesses = {{"instances", static_cast<double>(instances)}, {"max_residual", worst_one}};
  out.push_back(eq);
  out.push_back(one);

  CheckReport scan{"scan_matches_fold", true, {}, ""};
  CheckReport rounds{"scan_rounds_log_bound", true, {}, ""};
  double scan_err = 0.0, worst_ratio = 0.0;
  for (std::size_t T : {1, 2, 3, 7, 8, 1023, 1024, 1025, 16384}) {
    AffineSequence seq{Matrix(T, 2), normal_matrix(T, 2, rng)};
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (auto& v : seq.a.flat()) v = unif(rng);
    const Vector x0{0.5, -0.5};
    const auto res = prefix_scan_affine(seq, x0);
    Vector x = x0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < 2; ++d) {
        x[d] = seq.a(t, d) * x[d] + seq.c(t, d);
        scan_err = std::max(scan_err, std::abs(x[d] - res.states(t, d)));
      }
    const auto bound = 2 * ceil_log2(T);
    rounds.passed = rounds.passed && res.stats.sync_rounds <= bound;
    if (bound) worst_ratio = std::max(worst_ratio, static_cast<double>(res.stats.sync_rounds) / static_cast<double>(bound));
  }
  scan.passed = scan_err <= 1e-10;
  scan.witnesses = {{"max_abs_error", scan_err}};
  rounds.witnesses = {{"max_rounds_over_bound", worst_ratio}};
  out.push_back(scan);
  out.push_back(rounds);

  SolverConfig damped = cfg;
  damped.mode = SolverMode::elk_damped;
  damped.trust_ratio = 1e4;
  damped.max_iters = 500;
  const auto p = init_lrc_params(4, 4, rng);
  const auto u = normal_matrix(256, 4, rng);
  const Vector x0(4, 0.0);
  const auto ref = sequential_rollout(x0, u, p);
  const auto res = solve(x0, input_drive(u, p), p, {}, damped);
  const double err = max_abs_diff(res.states.flat(), ref.flat());
  out.push_back({"damped_matches_rollout", res.report.converged && err <= 1e-7,
                 {{"max_inf_error", err}, {"iterations", static_cast<double>(res.report.iterations)}}, ""});
}

/// Sum of w .* logits, the scalar whose gradient w.r.t. logits is w.
double weighted(const Matrix& logits, const Matrix& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.flat().size(); ++k) s += logits.flat()[k] * w.flat()[k];
  return s;
}

void gradients(const SuiteOptions& o, std::vector<CheckReport>& out) {
  std::mt19937_64 rng(o.seed + 303);

  double cross = 0.0;
  for (int probe = 0; probe < 1000; ++probe) {
    const auto p = init_lrc_params(6, 3, rng);
    const auto x = normal_vector(6, rng);
    const auto u = normal_vector(3, rng);
    const auto base = euler_step(x, u, p);
    const std::size_t j = static_cast<std::size_t>(probe) % 6;
    auto moved = x;
    moved[j] += 0.5;
    const auto step = euler_step(moved, u, p);
    for (std::size_t i = 0; i < 6; ++i)
      if (i != j) cross = std::max(cross, std::abs(step[i] - base[i]));
  }
  out.push_back({"jacobian_diagonal", cross <= 1e-12, {{"probes", 1000.0}, {"max_cross_sensitivity", cross}}, ""});

  constexpr double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int m = 0; m < 3; ++m) {
    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dim = 3;
    cfg.state_dim = 3;
    cfg.num_blocks = 1 + m % 2;
    cfg.num_classes = 2;
    cfg.seed = o.seed + m;
    cfg.solver.mode = SolverMode::sequential;
    if (m == 1) cfg.pooling = Pooling::mean;
    auto params = init_params(cfg);
    const std::vector<Matrix> batch{normal_matrix(8, 2, rng), normal_matrix(8, 2, rng)};
    const auto w = normal_matrix(2, 2, rng);
    const auto fw = forward(params, batch, cfg);
    auto grads = model_backward(fw.cache, w).params;
    std::vector<std::span<double>> pa, ga;
    params.for_each_array([&](const std::string&, std::span<double> s) { pa.push_back(s); });
    grads.for_each_array([&](const std::string&, std::span<double> s) { ga.push_back(s); });
    for (std::size_t a = 0; a < pa.size(); ++a)
      for (std::size_t k = 0; k < pa[a].size(); ++k) {
        const double keep = pa[a][k];
        pa[a][k] = keep + h;
        const double lp = weighted(forward(params, batch, cfg).logits, w);
        pa[a][k] = keep - h;
        const double lm = weighted(forward(params, batch, cfg).logits, w);
        pa[a][k] = keep;
        const double fd = (lp - lm) / (2 * h);
        worst = std::max(worst, std::abs(ga[a][k] - fd) / std::max({std::abs(ga[a][k]), std::abs(fd), 1e-4}));
        ++checked;
      }
  }
  out.push_back({"model_gradient_finite_difference", worst <= 1e-5,
                 {{"parameters_checked", static_cast<double>(checked)}, {"max_rel_error", worst}}, ""});
}

}  // namespace

std::vector<CheckReport> run_suites(const SuiteOptions& opts, std::ostream& out) {
  std::vector<CheckReport> reports;
  const bool all = opts.suite == "all";
  // checks run single-threaded except inside the scans they exercise
  if (all || opts.suite == "stability") stability(opts, reports);
  if (all || opts.suite == "solver") solver(opts, reports);
  if (all || opts.suite == "gradients") gradients(opts, reports);
  for (const auto& r : reports) out << r.to_json() << '\n';
  return reports;
}

}  // namespace lrcssm::cli
