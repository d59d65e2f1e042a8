#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrcssm/lrc_dynamics.hpp"
#include "lrcssm/matrix.hpp"
#include "lrcssm/solver.hpp"

namespace lrcssm {

enum class Pooling { last, mean };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view text);

struct ModelConfig {
  std::size_t input_dim = 1;   // p
  std::size_t hidden_dim = 16; // H
  std::size_t state_dim = 16;  // D
  std::size_t num_blocks = 2;  // L (0 allowed)
  std::size_t num_classes = 2; // C
  double dt = 1.0;
  DependenceMode dependence_mode = DependenceMode::full;
  std::optional<double> rho_clamp;
  Pooling pooling = Pooling::last;
  SolverConfig solver;
  std::uint64_t seed = 0;

  void validate() const;
  CellOptions cell_options() const { return {dt, dependence_mode, rho_clamp}; }
};

/// Pre-norm, LRC layer (input H, state D) and the D -> H -> H MLP.
struct BlockParams {
  Vector norm_scale;   // H
  Vector norm_offset;  // H
  LrcLayerParams lrc;
  Matrix mlp_w1;  // H x D
  Vector mlp_b1;  // H
  Matrix mlp_w2;  // H x H
  Vector mlp_b2;  // H

  template <class F>
  void for_each_array(const std::string& prefix, F&& f) {
    visit(*this, prefix, f);
  }
  template <class F>
  void for_each_array(const std::string& prefix, F&& f) const {
    visit(*this, prefix, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F& f) {
    f(prefix + "norm.scale", std::span(self.norm_scale));
    f(prefix + "norm.offset", std::span(self.norm_offset));
    self.lrc.for_each_array([&](std::string_view name, auto span) { f(prefix + "lrc." + std::string(name), span); });
    f(prefix + "mlp.w1", self.mlp_w1.flat());
    f(prefix + "mlp.b1", std::span(self.mlp_b1));
    f(prefix + "mlp.w2", self.mlp_w2.flat());
    f(prefix + "mlp.b2", std::span(self.mlp_b2));
  }
};

struct ModelParams {
  Matrix encoder_w;  // H x p
  Vector encoder_b;  // H
  std::vector<BlockParams> blocks;
  Vector post_scale;   // H
  Vector post_offset;  // H
  Matrix decoder_w;    // C x H
  Vector decoder_b;    // C

  /// Same shapes as `cfg` describes, every entry zero.
  static ModelParams zeros(const ModelConfig& cfg);

  /// Visits every array in checkpoint order as f(name, span).
  template <class F>
  void for_each_array(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_array(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  /// Throws ConfigError if shapes disagree with `cfg`.
  void check_shapes(const ModelConfig& cfg) const;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f(std::string("encoder.w"), self.encoder_w.flat());
    f(std::string("encoder.b"), std::span(self.encoder_b));
    for (std::size_t l = 0; l < self.blocks.size(); ++l)
      self.blocks[l].for_each_array("blocks." + std::to_string(l) + ".", f);
    f(std::string("post.scale"), std::span(self.post_scale));
    f(std::string("post.offset"), std::span(self.post_offset));
    f(std::string("decoder.w"), self.decoder_w.flat());
    f(std::string("decoder.b"), std::span(self.decoder_b));
  }
};

/// Deterministic for a fixed cfg.seed. Affine weights ~ U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), LRC input weights likewise with fan_in = H; a_x, w_x ~
/// U(-0.5, 0.5); conductance gains ~ U(0, 1); g_leak = 0.1;
/// e_leak ~ U(-1, 1); v_x ~ U(kElastanceOffsetMin, 0); other biases 0;
/// norm scales 1.
ModelParams init_params(const ModelConfig& cfg);

/// With dt = 1 a unit decays at roughly sigma(f) sigma(v_x) per step, so this
/// range covers memory horizons from a few steps to several thousand.
inline constexpr double kElastanceOffsetMin = -8.0;

/// The LRC part of init_params, drawing from `rng`.
LrcLayerParams init_lrc_params(std::size_t state_dim, std::size_t input_dim, std::mt19937_64& rng);

inline constexpr double kLayerNormEps = 1e-5;

Vector layer_norm(std::span<const double> x, std::span<const double> scale, std::span<const double> offset);

/// What the backward pass needs from one block on one sequence.
struct BlockCache {
  Matrix input;    // T x H, block input
  Matrix normed;   // T x H, LRC input
  Vector ln_mean;  // T
  Vector ln_rstd;  // T
  InputDrive drive;
  Matrix states;   // T x D
  Matrix mlp_pre;  // T x H, pre-GELU
  Matrix mlp_act;  // T x H, GELU output
  SolveReport report;
};

struct SequenceCache {
  Matrix encoded;  // T x H
  std::vector<BlockCache> blocks;
  Vector feature;  // pooled H-vector before post-norm
  double post_mean = 0.0;
  double post_rstd = 0.0;
  Vector post_out;  // H
};

struct ActivationCache {
  const ModelParams* params = nullptr;
  ModelConfig config;
  std::uint64_t params_fingerprint = 0;
  std::vector<Matrix> inputs;  // B x (T x p)
  std::vector<SequenceCache> sequences;
  Matrix logits;  // B x C

  /// Solves that hit max_iters without meeting the tolerance.
  std::size_t unconverged_solves() const;
  double mean_solver_iterations() const;
};

struct BlockOutput {
  Matrix output;  // T x H
  SolveReport report;
};

/// y = seq + MLP(LRC(layer_norm(seq))) with x0 = 0.
BlockOutput block_forward(const Matrix& seq, const BlockParams& bp, const ModelConfig& cfg);

/// Fills `cache` and returns the block output.
Matrix block_forward_cached(const Matrix& seq, const BlockParams& bp, const ModelConfig& cfg, BlockCache& cache);

struct ForwardResult {
  Matrix logits;  // B x C
  ActivationCache cache;
};

/// Encoder, L blocks, pooled last (or mean) feature, post-norm, decoder.
/// Throws NumericError whose index is the block that went non-finite
/// (num_blocks for the head).
ForwardResult forward(const ModelParams& params, std::span<const Matrix> batch, const ModelConfig& cfg);

/// Cheap order-sensitive hash over all parameter bits.
std::uint64_t fingerprint(const ModelParams& params);

double gelu(double v);
double gelu_grad(double v);

}  // namespace lrcssm
