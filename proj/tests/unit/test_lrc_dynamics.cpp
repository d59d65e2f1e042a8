#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "lrcssm/errors.hpp"
#include "lrcssm/lrc_dynamics.hpp"
#include "oracles.hpp"

using namespace lrcssm;

namespace {

const DependenceMode kModes[] = {DependenceMode::full, DependenceMode::a_input_only, DependenceMode::input_only};

}  // namespace

TEST_CASE("euler_step matches the scalar transcription in every mode") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t D = 1 + rng() % 6, n = 1 + rng() % 5;
    const auto p = oracle::random_lrc(D, n, rng, 1.5);
    const auto x = oracle::random_vector(D, rng, 3.0);
    const auto u = oracle::random_vector(n, rng, 2.0);
    const DependenceMode mode = kModes[trial % 3];
    std::optional<double> rho;
    if (trial % 4 == 0) rho = 0.6 + 0.35 * std::uniform_real_distribution<double>(0, 1)(rng);
    const double dt = trial % 5 == 0 ? 0.3 : 1.0;
    const CellOptions opts{dt, mode, rho};

    const auto ref = oracle::naive_cell(x, u, p, dt, mode, rho);
    const auto got = euler_step(x, u, p, opts);
    const auto a = a_diag(x, u, p, opts);
    const auto b = b_vec(x, u, p, opts);
    const auto d = drift(x, u, p, opts);
    for (std::size_t i = 0; i < D; ++i) {
      CHECK(got[i] == doctest::Approx(ref.next[i]).epsilon(1e-13));
      CHECK(a[i] == doctest::Approx(ref.a[i]).epsilon(1e-13));
      CHECK(b[i] == doctest::Approx(ref.b[i]).epsilon(1e-13));
      CHECK(d[i] == doctest::Approx(ref.a[i] * x[i] + ref.b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero parameters give decay 0.25 and no drive") {
  const auto p = LrcLayerParams::zeros(3, 2);
  const Vector x{1.0, -2.0, 4.0}, u{0.3, 0.7};
  const auto a = a_diag(x, u, p);
  const auto next = euler_step(x, u, p);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i] == -0.25);
    CHECK(next[i] == 0.75 * x[i]);
  }
}

TEST_CASE("gates match hand-evaluated pre-activations") {
  std::mt19937_64 rng(3);
  const auto p = oracle::random_lrc(4, 3, rng);
  const auto x = oracle::random_vector(4, rng);
  const auto u = oracle::random_vector(3, rng);
  const auto g = gates(x, u, p);
  for (std::size_t i = 0; i < 4; ++i) {
    double in_a = p.b_u_bias[i], in_w = p.v_u_bias[i];
    for (std::size_t j = 0; j < 3; ++j) {
      in_a += p.a_u(i, j) * u[j];
      in_w += p.w_u(i, j) * u[j];
    }
    const double sx = oracle::sig(p.a_x[i] * x[i] + p.b_x[i]);
    const double su = oracle::sig(in_a);
    CHECK(g.f_star[i] == doctest::Approx(p.g_max_x[i] * sx + p.g_max_u[i] * su + p.g_leak[i]));
    CHECK(g.z_star[i] == doctest::Approx(p.k_max_x[i] * sx + p.k_max_u[i] * su + p.g_leak[i]));
    CHECK(g.eps_star[i] == doctest::Approx(p.w_x[i] * x[i] + p.v_x[i] + in_w));
  }
}

TEST_CASE("input_drive is the per-step affine map of the inputs") {
  std::mt19937_64 rng(5);
  const auto p = oracle::random_lrc(3, 2, rng);
  const auto inputs = oracle::random_matrix(7, 2, rng);
  const auto drive = input_drive(inputs, p);
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(drive.pre_u(t, i) ==
            doctest::Approx(p.a_u(i, 0) * inputs(t, 0) + p.a_u(i, 1) * inputs(t, 1) + p.b_u_bias[i]));
      CHECK(drive.eps_u(t, i) ==
            doctest::Approx(p.w_u(i, 0) * inputs(t, 0) + p.w_u(i, 1) * inputs(t, 1) + p.v_u_bias[i]));
    }
}

TEST_CASE("step Jacobian diagonal matches central differences") {
  std::mt19937_64 rng(17);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t D = 1 + rng() % 5, n = 1 + rng() % 3;
    const auto p = oracle::random_lrc(D, n, rng, 1.5);
    const auto x = oracle::random_vector(D, rng, 2.0);
    const auto u = oracle::random_vector(n, rng);
    std::optional<double> rho;
    if (trial % 3 == 0) rho = 0.8;
    const CellOptions opts{trial % 2 ? 0.5 : 1.0, kModes[trial % 3], rho};
    const auto jac = step_jacobian_diag(x, u, p, opts);
    for (std::size_t i = 0; i < D; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (oracle::naive_cell(xp, u, p, opts.dt, opts.mode, rho).next[i] -
                         oracle::naive_cell(xm, u, p, opts.dt, opts.mode, rho).next[i]) /
                        (2 * h);
      CHECK(jac[i] == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
    }
  }
}

TEST_CASE("perturbing one coordinate leaves the others bitwise unchanged") {
  std::mt19937_64 rng(23);
  const auto p = oracle::random_lrc(6, 3, rng);
  const auto x = oracle::random_vector(6, rng);
  const auto u = oracle::random_vector(3, rng);
  const auto base = euler_step(x, u, p);
  for (std::size_t j = 0; j < 6; ++j) {
    auto xp = x;
    xp[j] += 0.37;
    const auto moved = euler_step(xp, u, p);
    for (std::size_t i = 0; i < 6; ++i)
      if (i != j) CHECK(moved[i] == base[i]);
  }
}

TEST_CASE("rho clamp keeps the decay coefficient in [1 - rho, rho]") {
  std::mt19937_64 rng(29);
  const double rho = 0.9;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = oracle::random_lrc(4, 2, rng, 8.0);
    const auto x = oracle::random_vector(4, rng, 5.0);
    const auto u = oracle::random_vector(2, rng, 5.0);
    const auto a = a_diag(x, u, p, {1.0, DependenceMode::full, rho});
    for (double v : a) {
      CHECK(1.0 + v >= 1.0 - rho - 1e-15);
      CHECK(1.0 + v <= rho + 1e-15);
    }
  }
}

TEST_CASE("dependence modes differ only through the state terms") {
  std::mt19937_64 rng(31);
  auto p = oracle::random_lrc(5, 3, rng);
  const auto x = oracle::random_vector(5, rng);
  const auto u = oracle::random_vector(3, rng);
  const auto full = euler_step(x, u, p, {1.0, DependenceMode::full, {}});
  const auto a_in = euler_step(x, u, p, {1.0, DependenceMode::a_input_only, {}});
  const auto in = euler_step(x, u, p, {1.0, DependenceMode::input_only, {}});
  CHECK(full != a_in);
  CHECK(a_in != in);

  std::fill(p.a_x.begin(), p.a_x.end(), 0.0);
  std::fill(p.w_x.begin(), p.w_x.end(), 0.0);
  std::fill(p.k_max_x.begin(), p.k_max_x.end(), 0.0);
  CHECK(euler_step(x, u, p, {1.0, DependenceMode::full, {}}) ==
        euler_step(x, u, p, {1.0, DependenceMode::input_only, {}}));
}

TEST_CASE("invalid options and shapes are rejected") {
  const auto p = LrcLayerParams::zeros(2, 1);
  const Vector x{0.0, 0.0}, u{0.0};
  CHECK_THROWS_AS(euler_step(x, u, p, {1.0, DependenceMode::full, 0.4}), ConfigError);
  CHECK_THROWS_AS(euler_step(x, u, p, {1.0, DependenceMode::full, 1.0}), ConfigError);
  CHECK_THROWS_AS(euler_step(x, u, p, {-1.0, DependenceMode::full, {}}), ConfigError);
  CHECK_THROWS_AS(euler_step(Vector{0.0}, u, p), ConfigError);
  CHECK_THROWS_AS(euler_step(x, Vector{0.0, 1.0}, p), ConfigError);
}

TEST_CASE("non-finite results name the offending coordinate") {
  const auto p = LrcLayerParams::zeros(3, 1);
  const Vector x{0.0, std::numeric_limits<double>::quiet_NaN(), 0.0};
  try {
    euler_step(x, Vector{0.0}, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("dependence mode names round-trip") {
  for (auto m : kModes) CHECK(parse_dependence_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_dependence_mode("bogus"), ConfigError);
}
