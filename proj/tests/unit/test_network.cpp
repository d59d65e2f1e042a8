#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "lrcssm/errors.hpp"
#include "lrcssm/network.hpp"
#include "oracles.hpp"

using namespace lrcssm;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_dim = 5;
  cfg.state_dim = 4;
  cfg.num_blocks = 2;
  cfg.num_classes = 3;
  cfg.seed = 42;
  cfg.solver.mode = SolverMode::sequential;
  return cfg;
}

Matrix naive_block(const Matrix& seq, const BlockParams& bp, const ModelConfig& cfg) {
  const std::size_t T = seq.rows(), H = seq.cols();
  Matrix normed(T, H);
  for (std::size_t t = 0; t < T; ++t) {
    double m = 0.0, v = 0.0;
    for (std::size_t k = 0; k < H; ++k) m += seq(t, k) / H;
    for (std::size_t k = 0; k < H; ++k) v += (seq(t, k) - m) * (seq(t, k) - m) / H;
    for (std::size_t k = 0; k < H; ++k)
      normed(t, k) = bp.norm_scale[k] * (seq(t, k) - m) / std::sqrt(v + 1e-5) + bp.norm_offset[k];
  }
  const auto states = oracle::naive_rollout(Vector(cfg.state_dim, 0.0), normed, bp.lrc, cfg.dt, cfg.dependence_mode);
  Matrix out = seq;
  for (std::size_t t = 0; t < T; ++t) {
    Vector act(H);
    for (std::size_t k = 0; k < H; ++k) {
      double s = bp.mlp_b1[k];
      for (std::size_t j = 0; j < cfg.state_dim; ++j) s += bp.mlp_w1(k, j) * states(t, j);
      act[k] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
    }
    for (std::size_t k = 0; k < H; ++k) {
      double s = bp.mlp_b2[k];
      for (std::size_t j = 0; j < H; ++j) s += bp.mlp_w2(k, j) * act[j];
      out(t, k) += s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("init is deterministic by seed and follows the documented ranges") {
  const auto cfg = small_config();
  const auto a = init_params(cfg);
  const auto b = init_params(cfg);
  CHECK(fingerprint(a) == fingerprint(b));
  auto other = cfg;
  other.seed = 43;
  CHECK(fingerprint(init_params(other)) != fingerprint(a));

  const auto& lrc = a.blocks[0].lrc;
  for (std::size_t i = 0; i < cfg.state_dim; ++i) {
    CHECK(lrc.g_leak[i] == 0.1);
    CHECK(lrc.g_max_x[i] >= 0.0);
    CHECK(lrc.g_max_x[i] <= 1.0);
    CHECK(std::abs(lrc.a_x[i]) <= 0.5);
    CHECK(std::abs(lrc.e_leak[i]) <= 1.0);
    CHECK(lrc.v_x[i] >= kElastanceOffsetMin);
    CHECK(lrc.v_x[i] <= 0.0);
    CHECK(lrc.b_x[i] == 0.0);
  }
  for (double v : a.encoder_w.flat()) CHECK(std::abs(v) <= 1.0 / std::sqrt(3.0));
  for (double v : a.blocks[1].norm_scale) CHECK(v == 1.0);
}

TEST_CASE("parameter_count matches the closed form") {
  const auto cfg = small_config();
  const std::size_t H = 5, D = 4, p = 3, C = 3, L = 2;
  const std::size_t lrc = 12 * D + 2 * D * H;
  const std::size_t block = 2 * H + lrc + H * D + H + H * H + H;
  CHECK(init_params(cfg).parameter_count() == H * p + H + L * block + 2 * H + C * H + C);
}

TEST_CASE("layer_norm standardizes then applies scale and offset") {
  const Vector x{1.0, 2.0, 3.0, 4.0};
  const auto y = layer_norm(x, Vector(4, 1.0), Vector(4, 0.0));
  double m = 0.0, v = 0.0;
  for (double e : y) m += e / 4;
  for (double e : y) v += (e - m) * (e - m) / 4;
  CHECK(m == doctest::Approx(0.0).scale(1.0));
  CHECK(v == doctest::Approx(1.25 / (1.25 + 1e-5)));
  const auto z = layer_norm(x, Vector(4, 2.0), Vector(4, 1.0));
  for (std::size_t k = 0; k < 4; ++k) CHECK(z[k] == doctest::Approx(2.0 * y[k] + 1.0));
}

TEST_CASE("block_forward matches a hand-written block") {
  auto cfg = small_config();
  std::mt19937_64 rng(9);
  const auto params = init_params(cfg);
  const auto seq = oracle::random_matrix(30, cfg.hidden_dim, rng);
  for (auto mode : {SolverMode::sequential, SolverMode::newton_scan}) {
    cfg.solver.mode = mode;
    const auto got = block_forward(seq, params.blocks[0], cfg).output;
    const auto ref = naive_block(seq, params.blocks[0], cfg);
    CHECK(max_abs_diff(got.flat(), ref.flat()) <= 1e-8);
  }
}

TEST_CASE("forward treats batch items independently") {
  const auto cfg = small_config();
  std::mt19937_64 rng(10);
  const auto params = init_params(cfg);
  std::vector<Matrix> batch;
  for (int k = 0; k < 5; ++k) batch.push_back(oracle::random_matrix(12, 3, rng));
  const auto all = forward(params, batch, cfg);
  CHECK(all.logits.rows() == 5);
  CHECK(all.cache.sequences.size() == 5);
  for (std::size_t b = 0; b < 5; ++b) {
    const auto one = forward(params, std::span<const Matrix>(&batch[b], 1), cfg);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) CHECK(one.logits(0, c) == all.logits(b, c));
  }
  CHECK(forward(params, batch, cfg).logits == all.logits);
}

TEST_CASE("mean pooling and zero blocks") {
  auto cfg = small_config();
  cfg.num_blocks = 0;
  cfg.pooling = Pooling::mean;
  std::mt19937_64 rng(11);
  const auto params = init_params(cfg);
  const auto x = oracle::random_matrix(6, 3, rng);
  const auto res = forward(params, std::span<const Matrix>(&x, 1), cfg);
  Vector feat(cfg.hidden_dim, 0.0);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t k = 0; k < cfg.hidden_dim; ++k) {
      double s = params.encoder_b[k];
      for (std::size_t j = 0; j < 3; ++j) s += params.encoder_w(k, j) * x(t, j);
      feat[k] += s / 6.0;
    }
  const auto post = layer_norm(feat, params.post_scale, params.post_offset);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    double s = params.decoder_b[c];
    for (std::size_t k = 0; k < cfg.hidden_dim; ++k) s += params.decoder_w(c, k) * post[k];
    CHECK(res.logits(0, c) == doctest::Approx(s));
  }
}

TEST_CASE("non-finite activations report the block index") {
  const auto cfg = small_config();
  auto params = init_params(cfg);
  params.blocks[1].mlp_b2[0] = std::numeric_limits<double>::quiet_NaN();
  const Matrix x(4, 3);
  try {
    forward(params, std::span<const Matrix>(&x, 1), cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("config and shape validation") {
  auto cfg = small_config();
  cfg.hidden_dim = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.num_classes = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.rho_clamp = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config();
  const auto params = init_params(cfg);
  auto bigger = cfg;
  bigger.state_dim = 5;
  CHECK_THROWS_AS(params.check_shapes(bigger), ConfigError);
  const Matrix wrong(4, 2);
  CHECK_THROWS_AS(forward(params, std::span<const Matrix>(&wrong, 1), cfg), ConfigError);
  CHECK(parse_pooling("mean") == Pooling::mean);
  CHECK_THROWS_AS(parse_pooling("max"), ConfigError);
}

TEST_CASE("gelu derivative matches central differences") {
  for (double v = -4.0; v <= 4.0; v += 0.37)
    CHECK(gelu_grad(v) == doctest::Approx((gelu(v + 1e-6) - gelu(v - 1e-6)) / 2e-6).epsilon(1e-7));
}
