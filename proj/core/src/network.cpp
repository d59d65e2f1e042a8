#include "lrcssm/network.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <numeric>
#include <string>

#include "lrcssm/errors.hpp"
#include "lrcssm/flops.hpp"

namespace lrcssm {

std::string_view to_string(Pooling pooling) { return pooling == Pooling::last ? "last" : "mean"; }

Pooling parse_pooling(std::string_view text) {
  if (text == "last") return Pooling::last;
  if (text == "mean") return Pooling::mean;
  throw ConfigError("unknown pooling '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (hidden_dim < 2) throw ConfigError("model.hidden must be >= 2 (layer norm over features)");
  if (state_dim < 1) throw ConfigError("model.state must be >= 1");
  if (num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("model.dt must be > 0");
  cell_options().validate();
  solver.validate();
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  const std::size_t H = cfg.hidden_dim, D = cfg.state_dim;
  ModelParams m;
  m.encoder_w = Matrix(H, cfg.input_dim);
  m.encoder_b.assign(H, 0.0);
  m.blocks.resize(cfg.num_blocks);
  for (auto& b : m.blocks) {
    b.norm_scale.assign(H, 0.0);
    b.norm_offset.assign(H, 0.0);
    b.lrc = LrcLayerParams::zeros(D, H);
    b.mlp_w1 = Matrix(H, D);
    b.mlp_b1.assign(H, 0.0);
    b.mlp_w2 = Matrix(H, H);
    b.mlp_b2.assign(H, 0.0);
  }
  m.post_scale.assign(H, 0.0);
  m.post_offset.assign(H, 0.0);
  m.decoder_w = Matrix(cfg.num_classes, H);
  m.decoder_b.assign(cfg.num_classes, 0.0);
  return m;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_array([&](const std::string&, std::span<const double> a) { n += a.size(); });
  return n;
}

void ModelParams::check_shapes(const ModelConfig& cfg) const {
  const ModelParams ref = zeros(cfg);
  std::vector<std::pair<std::string, std::size_t>> want;
  ref.for_each_array([&](const std::string& name, std::span<const double> a) { want.emplace_back(name, a.size()); });
  std::size_t k = 0;
  bool ok = true;
  for_each_array([&](const std::string& name, std::span<const double> a) {
    if (k >= want.size() || want[k].first != name || want[k].second != a.size()) ok = false;
    ++k;
  });
  if (!ok || k != want.size()) throw ConfigError("model parameters do not match the model configuration");
  for (const auto& b : blocks)
    if (b.lrc.a_u.rows() != cfg.state_dim || b.lrc.a_u.cols() != cfg.hidden_dim)
      throw ConfigError("LRC input weights do not match the model configuration");
}

namespace {

void fill_uniform(std::span<double> v, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : v) x = dist(rng);
}

void init_affine(Matrix& w, Vector& b, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
  fill_uniform(w.flat(), -bound, bound, rng);
  std::fill(b.begin(), b.end(), 0.0);
}

}  // namespace

LrcLayerParams init_lrc_params(std::size_t state_dim, std::size_t input_dim, std::mt19937_64& rng) {
  LrcLayerParams p = LrcLayerParams::zeros(state_dim, input_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  fill_uniform(p.g_max_x, 0.0, 1.0, rng);
  fill_uniform(p.g_max_u, 0.0, 1.0, rng);
  fill_uniform(p.k_max_x, 0.0, 1.0, rng);
  fill_uniform(p.k_max_u, 0.0, 1.0, rng);
  fill_uniform(p.a_x, -0.5, 0.5, rng);
  fill_uniform(p.a_u.flat(), -bound, bound, rng);
  std::fill(p.g_leak.begin(), p.g_leak.end(), 0.1);
  fill_uniform(p.e_leak, -1.0, 1.0, rng);
  fill_uniform(p.w_x, -0.5, 0.5, rng);
  fill_uniform(p.w_u.flat(), -bound, bound, rng);
  // elastance offsets spread the per-unit decay rates over several decades
  fill_uniform(p.v_x, kElastanceOffsetMin, 0.0, rng);
  return p;
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ModelParams m = ModelParams::zeros(cfg);
  init_affine(m.encoder_w, m.encoder_b, rng);
  for (auto& b : m.blocks) {
    std::fill(b.norm_scale.begin(), b.norm_scale.end(), 1.0);
    b.lrc = init_lrc_params(cfg.state_dim, cfg.hidden_dim, rng);
    init_affine(b.mlp_w1, b.mlp_b1, rng);
    init_affine(b.mlp_w2, b.mlp_b2, rng);
  }
  std::fill(m.post_scale.begin(), m.post_scale.end(), 1.0);
  init_affine(m.decoder_w, m.decoder_b, rng);
  return m;
}

namespace {

void layer_norm_into(std::span<const double> x, std::span<const double> scale, std::span<const double> offset,
                     std::span<double> out, double& mean, double& rstd) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var /= n;
  mean = m;
  rstd = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = scale[k] * ((x[k] - m) * rstd) + offset[k];
}

bool all_finite(const Matrix& m) {
  for (double v : m.flat())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

Vector layer_norm(std::span<const double> x, std::span<const double> scale, std::span<const double> offset) {
  if (x.size() < 2) throw ConfigError("layer_norm needs at least 2 features");
  if (scale.size() != x.size() || offset.size() != x.size()) throw ConfigError("layer_norm: shape mismatch");
  Vector out(x.size());
  double mean = 0.0, rstd = 0.0;
  layer_norm_into(x, scale, offset, out, mean, rstd);
  return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); }

double gelu_grad(double v) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
}

Matrix block_forward_cached(const Matrix& seq, const BlockParams& bp, const ModelConfig& cfg, BlockCache& cache) {
  const std::size_t T = seq.rows();
  const std::size_t H = cfg.hidden_dim;
  const std::size_t D = cfg.state_dim;
  if (seq.cols() != H) throw ConfigError("block input must be T x hidden");
  if (T == 0) throw ConfigError("sequence length must be >= 1");

  cache.input = seq;
  cache.normed = Matrix(T, H);
  cache.ln_mean.assign(T, 0.0);
  cache.ln_rstd.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    layer_norm_into(seq.row(t), bp.norm_scale, bp.norm_offset, cache.normed.row(t), cache.ln_mean[t],
                    cache.ln_rstd[t]);

  cache.drive = input_drive(cache.normed, bp.lrc);
  const Vector x0(D, 0.0);
  auto solved = solve(x0, cache.drive, bp.lrc, cfg.cell_options(), cfg.solver);
  cache.states = std::move(solved.states);
  cache.report = solved.report;

  affine_rows(cache.states, bp.mlp_w1, bp.mlp_b1, cache.mlp_pre);
  cache.mlp_act = Matrix(T, H);
  for (std::size_t k = 0; k < cache.mlp_act.size(); ++k) cache.mlp_act.data()[k] = gelu(cache.mlp_pre.data()[k]);
  Matrix out;
  affine_rows(cache.mlp_act, bp.mlp_w2, bp.mlp_b2, out);
  for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += seq.data()[k];

  flops::add(flops::Phase::forward, T * (6 * H + 2 * H * D + H * D + 2 * H + H * H + H));
  return out;
}

BlockOutput block_forward(const Matrix& seq, const BlockParams& bp, const ModelConfig& cfg) {
  BlockCache cache;
  Matrix out = block_forward_cached(seq, bp, cfg, cache);
  return {std::move(out), cache.report};
}

std::uint64_t fingerprint(const ModelParams& params) {
  std::uint64_t h = 1469598103934665603ull;
  params.for_each_array([&](const std::string&, std::span<const double> a) {
    for (double v : a) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
    h = (h ^ a.size()) * 1099511628211ull;
  });
  return h;
}

std::size_t ActivationCache::unconverged_solves() const {
  std::size_t n = 0;
  for (const auto& s : sequences)
    for (const auto& b : s.blocks)
      if (!b.report.converged) ++n;
  return n;
}

double ActivationCache::mean_solver_iterations() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences)
    for (const auto& b : s.blocks) {
      sum += static_cast<double>(b.report.iterations);
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

ForwardResult forward(const ModelParams& params, std::span<const Matrix> batch, const ModelConfig& cfg) {
  cfg.validate();
  params.check_shapes(cfg);
  const std::size_t B = batch.size();
  const std::size_t H = cfg.hidden_dim;
  const std::size_t C = cfg.num_classes;
  for (const auto& x : batch)
    if (x.cols() != cfg.input_dim || x.rows() == 0)
      throw ConfigError("every sequence must be T x input_dim with T >= 1");

  ForwardResult res;
  res.cache.params = &params;
  res.cache.config = cfg;
  res.cache.params_fingerprint = fingerprint(params);
  res.cache.inputs.assign(batch.begin(), batch.end());
  res.cache.sequences.resize(B);
  res.logits = Matrix(B, C);

  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (B > 1)
  for (std::ptrdiff_t bs = 0; bs < static_cast<std::ptrdiff_t>(B); ++bs) {
    const auto b = static_cast<std::size_t>(bs);
    try {
      SequenceCache& sc = res.cache.sequences[b];
      const Matrix& x = batch[b];
      const std::size_t T = x.rows();
      affine_rows(x, params.encoder_w, params.encoder_b, sc.encoded);
      flops::add(flops::Phase::forward, T * H * cfg.input_dim);
      sc.blocks.resize(cfg.num_blocks);
      Matrix h = sc.encoded;
      for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
        try {
          h = block_forward_cached(h, params.blocks[l], cfg, sc.blocks[l]);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " inside block", l);
        }
        if (!all_finite(h)) throw NumericError("non-finite activations in block", l);
      }
      sc.feature.assign(H, 0.0);
      if (cfg.pooling == Pooling::last) {
        const auto last = h.row(T - 1);
        std::copy(last.begin(), last.end(), sc.feature.begin());
      } else {
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < H; ++k) sc.feature[k] += h(t, k);
        for (double& v : sc.feature) v /= static_cast<double>(T);
      }
      sc.post_out.assign(H, 0.0);
      layer_norm_into(sc.feature, params.post_scale, params.post_offset, sc.post_out, sc.post_mean, sc.post_rstd);
      matvec(params.decoder_w, sc.post_out, res.logits.row(b));
      for (std::size_t c = 0; c < C; ++c) {
        res.logits(b, c) += params.decoder_b[c];
        if (!std::isfinite(res.logits(b, c))) throw NumericError("non-finite logits after block", cfg.num_blocks);
      }
      flops::add(flops::Phase::forward, 6 * H + C * H);
    } catch (...) {
#pragma omp critical(lrcssm_forward_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  res.cache.logits = res.logits;
  return res;
}

}  // namespace lrcssm
