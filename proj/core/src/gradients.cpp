#include "lrcssm/gradients.hpp"

#include <cassert>
#include <cmath>
#include <exception>
#include <string>

#include "lrcssm/errors.hpp"
#include "lrcssm/flops.hpp"

namespace lrcssm {

GradientSet GradientSet::zeros(const ModelConfig& cfg) {
  GradientSet g;
  g.params = ModelParams::zeros(cfg);
  g.grad_x0.assign(cfg.num_blocks, Vector(cfg.state_dim, 0.0));
  return g;
}

namespace {

void add_into(std::span<double> dst, std::span<const double> src) {
  assert(dst.size() == src.size());
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

void accumulate_unit(LrcLayerParams& d, std::size_t i, const kernel::UnitGrad& g) {
  d.g_max_x[i] += g.dgx;
  d.g_max_u[i] += g.dgu;
  d.k_max_x[i] += g.dkx;
  d.k_max_u[i] += g.dku;
  d.a_x[i] += g.dax;
  d.b_x[i] += g.dbx;
  d.g_leak[i] += g.dgl;
  d.e_leak[i] += g.del;
  d.w_x[i] += g.dwx;
  d.v_x[i] += g.dvx;
  d.b_u_bias[i] += g.dpre_u;
  d.v_u_bias[i] += g.deps_u;
}

// Layer-norm VJP for one row; accumulates into scale/offset grads and dx.
void layer_norm_backward(std::span<const double> x, double mean, double rstd, std::span<const double> scale,
                         std::span<const double> dy, std::span<double> dscale, std::span<double> doffset,
                         std::span<double> dx) {
  const std::size_t n = x.size();
  double mean_dxhat = 0.0;
  double mean_dxhat_xhat = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double xhat = (x[k] - mean) * rstd;
    const double dxhat = dy[k] * scale[k];
    dscale[k] += dy[k] * xhat;
    doffset[k] += dy[k];
    mean_dxhat += dxhat;
    mean_dxhat_xhat += dxhat * xhat;
  }
  mean_dxhat /= static_cast<double>(n);
  mean_dxhat_xhat /= static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double xhat = (x[k] - mean) * rstd;
    const double dxhat = dy[k] * scale[k];
    dx[k] += rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
  }
}

// dW += dY^T X, db += sum_rows dY.
void affine_weight_grads(const Matrix& dy, const Matrix& x, Matrix& dw, std::span<double> db) {
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto g = dy.row(r);
    const auto in = x.row(r);
    for (std::size_t o = 0; o < dy.cols(); ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      double* w = dw.data() + o * dw.cols();
      for (std::size_t k = 0; k < in.size(); ++k) w[k] += go * in[k];
      db[o] += go;
    }
  }
}

// dX = dY W.
Matrix affine_input_grad(const Matrix& dy, const Matrix& w) {
  Matrix dx(dy.rows(), w.cols());
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double* out = dx.data() + r * w.cols();
    for (std::size_t o = 0; o < dy.cols(); ++o) {
      const double go = dy(r, o);
      if (go == 0.0) continue;
      const double* wr = w.data() + o * w.cols();
      for (std::size_t k = 0; k < w.cols(); ++k) out[k] += go * wr[k];
    }
  }
  return dx;
}

template <class F>
void zip_arrays(ModelParams& dst, const ModelParams& src, F&& f) {
  std::vector<std::span<const double>> spans;
  src.for_each_array([&](const std::string&, std::span<const double> a) { spans.push_back(a); });
  std::size_t k = 0;
  dst.for_each_array([&](const std::string&, std::span<double> a) {
    if (k >= spans.size() || spans[k].size() != a.size()) throw UsageError("gradient shapes do not match");
    f(a, spans[k++]);
  });
}

}  // namespace

StepGradient step_backward(std::span<const double> x_prev, std::span<const double> u, const LrcLayerParams& p,
                           const CellOptions& opts, std::span<const double> upstream) {
  const std::size_t D = p.state_dim();
  const std::size_t n = p.input_dim();
  if (x_prev.size() != D || upstream.size() != D || u.size() != n)
    throw ConfigError("step_backward: shape mismatch");
  opts.validate();
  Matrix u_row(1, n);
  std::copy(u.begin(), u.end(), u_row.row(0).begin());
  const InputDrive drive = input_drive(u_row, p);

  StepGradient out{Vector(D, 0.0), Vector(n, 0.0), LrcLayerParams::zeros(D, n)};
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    const auto fw = kernel::unit_forward(c, x_prev[i], drive.pre_u(0, i), drive.eps_u(0, i), opts);
    const auto g = kernel::unit_backward(c, x_prev[i], fw, opts, upstream[i]);
    out.d_x_prev[i] = g.dx;
    accumulate_unit(out.d_params, i, g);
    for (std::size_t j = 0; j < n; ++j) {
      out.d_params.a_u(i, j) += g.dpre_u * u[j];
      out.d_params.w_u(i, j) += g.deps_u * u[j];
      out.d_u[j] += g.dpre_u * p.a_u(i, j) + g.deps_u * p.w_u(i, j);
    }
  }
  return out;
}

Matrix adjoint_reverse_scan(const Matrix& lambdas, std::span<const double> seed, ScanStats* stats) {
  const std::size_t T = lambdas.rows();
  const std::size_t D = lambdas.cols();
  if (seed.size() != D) throw ConfigError("adjoint_reverse_scan: seed dimension mismatch");
  if (T == 0) return {};
  AffineSequence seq{Matrix(T, D), Matrix(T, D)};
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t i = 0; i < D; ++i) seq.a(t, i) = lambdas(t + 1, i);
  for (std::size_t i = 0; i < D; ++i) seq.c(T - 1, i) = seed[i];
  auto res = reverse_scan_affine(seq);
  if (stats) *stats = res.stats;
  return std::move(res.states);
}

Matrix trajectory_jacobians(const Matrix& states, std::span<const double> x0, const InputDrive& drive,
                            const LrcLayerParams& p, const CellOptions& opts) {
  const std::size_t T = states.rows();
  const std::size_t D = states.cols();
  if (D != p.state_dim() || x0.size() != D || drive.pre_u.rows() != T || drive.pre_u.cols() != D)
    throw ConfigError("trajectory_jacobians: shape mismatch");
  Matrix lam(T, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < D; ++i) {
      const auto c = kernel::unit_coeffs(p, i);
      const double s = t == 0 ? x0[i] : states(t - 1, i);
      const auto fw = kernel::unit_forward(c, s, drive.pre_u(t, i), drive.eps_u(t, i), opts);
      lam(t, i) = kernel::unit_lambda(c, s, fw, opts);
    }
  return lam;
}

Vector lrc_backward(const Matrix& states, std::span<const double> x0, const Matrix& inputs,
                    const InputDrive& drive, const LrcLayerParams& p, const CellOptions& opts,
                    const Matrix& d_states, LrcLayerParams& d_params, Matrix& d_inputs) {
  const std::size_t T = states.rows();
  const std::size_t D = p.state_dim();
  const std::size_t n = p.input_dim();
  if (!d_states.same_shape(states) || inputs.rows() != T || inputs.cols() != n)
    throw ConfigError("lrc_backward: shape mismatch");

  // One gate evaluation per unit-step, shared by the Jacobians and the VJP.
  std::vector<kernel::UnitForward> fw(T * D);
  Matrix lam(T, D);
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    for (std::size_t t = 0; t < T; ++t) {
      const double s = t == 0 ? x0[i] : states(t - 1, i);
      auto& f = fw[t * D + i];
      f = kernel::unit_forward(c, s, drive.pre_u(t, i), drive.eps_u(t, i), opts);
      lam(t, i) = kernel::unit_lambda(c, s, f, opts);
    }
  }
  // g_t = d_states_t + lambda_{t+1} g_{t+1}
  AffineSequence seq{Matrix(T, D), d_states};
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t i = 0; i < D; ++i) seq.a(t, i) = lam(t + 1, i);
  const ScanResult adj = reverse_scan_affine(seq);

  Matrix dpre(T, D), deps(T, D);
  Vector dx0(D, 0.0);
  for (std::size_t i = 0; i < D; ++i) {
    const auto c = kernel::unit_coeffs(p, i);
    kernel::UnitGrad sum{};
    for (std::size_t t = 0; t < T; ++t) {
      const double s = t == 0 ? x0[i] : states(t - 1, i);
      const auto g = kernel::unit_backward(c, s, fw[t * D + i], opts, adj.states(t, i));
      sum.dgx += g.dgx;
      sum.dgu += g.dgu;
      sum.dkx += g.dkx;
      sum.dku += g.dku;
      sum.dax += g.dax;
      sum.dbx += g.dbx;
      sum.dgl += g.dgl;
      sum.del += g.del;
      sum.dwx += g.dwx;
      sum.dvx += g.dvx;
      sum.dpre_u += g.dpre_u;
      sum.deps_u += g.deps_u;
      dpre(t, i) = g.dpre_u;
      deps(t, i) = g.deps_u;
      if (t == 0) dx0[i] = g.dx;
    }
    accumulate_unit(d_params, i, sum);
  }
  Vector unused(D, 0.0);
  affine_weight_grads(dpre, inputs, d_params.a_u, unused);
  affine_weight_grads(deps, inputs, d_params.w_u, unused);
  d_inputs = affine_input_grad(dpre, p.a_u);
  const Matrix from_eps = affine_input_grad(deps, p.w_u);
  for (std::size_t k = 0; k < d_inputs.size(); ++k) d_inputs.data()[k] += from_eps.data()[k];

  flops::add(flops::Phase::backward,
             T * D * (flops::kCellEval + flops::kCellLambda + flops::kCellBackward + 4 * n) +
                 (adj.stats.combines + T) * D * flops::kAffineCompose);
  return dx0;
}

namespace {

void block_backward(const BlockCache& bc, const BlockParams& bp, const ModelConfig& cfg, Matrix& d_seq,
                    BlockParams& g, Vector& g_x0) {
  const std::size_t T = bc.input.rows();
  const std::size_t H = cfg.hidden_dim;
  const std::size_t D = cfg.state_dim;

  // out = input + W2 gelu(W1 states + b1) + b2
  affine_weight_grads(d_seq, bc.mlp_act, g.mlp_w2, g.mlp_b2);
  Matrix d_pre = affine_input_grad(d_seq, bp.mlp_w2);
  for (std::size_t k = 0; k < d_pre.size(); ++k) d_pre.data()[k] *= gelu_grad(bc.mlp_pre.data()[k]);
  affine_weight_grads(d_pre, bc.states, g.mlp_w1, g.mlp_b1);
  const Matrix d_states = affine_input_grad(d_pre, bp.mlp_w1);

  Matrix d_normed;
  const Vector x0(D, 0.0);
  const Vector dx0 =
      lrc_backward(bc.states, x0, bc.normed, bc.drive, bp.lrc, cfg.cell_options(), d_states, g.lrc, d_normed);
  add_into(g_x0, dx0);

  for (std::size_t t = 0; t < T; ++t)
    layer_norm_backward(bc.input.row(t), bc.ln_mean[t], bc.ln_rstd[t], bp.norm_scale, d_normed.row(t),
                        g.norm_scale, g.norm_offset, d_seq.row(t));
  flops::add(flops::Phase::backward, T * (2 * H * H + 2 * H * D + 2 * H + 10 * H));
}

GradientSet sequence_backward(const ActivationCache& cache, std::size_t b, std::span<const double> d_logit) {
  const ModelConfig& cfg = cache.config;
  const ModelParams& params = *cache.params;
  const SequenceCache& sc = cache.sequences[b];
  const Matrix& x = cache.inputs[b];
  const std::size_t T = x.rows();
  const std::size_t H = cfg.hidden_dim;
  const std::size_t C = cfg.num_classes;
  GradientSet g = GradientSet::zeros(cfg);

  Vector d_post(H, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    g.params.decoder_b[c] += d_logit[c];
    for (std::size_t k = 0; k < H; ++k) {
      g.params.decoder_w(c, k) += d_logit[c] * sc.post_out[k];
      d_post[k] += d_logit[c] * params.decoder_w(c, k);
    }
  }
  Vector d_feature(H, 0.0);
  layer_norm_backward(sc.feature, sc.post_mean, sc.post_rstd, params.post_scale, d_post, g.params.post_scale,
                      g.params.post_offset, d_feature);

  Matrix dh(T, H);
  if (cfg.pooling == Pooling::last) {
    std::copy(d_feature.begin(), d_feature.end(), dh.row(T - 1).begin());
  } else {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < H; ++k) dh(t, k) = d_feature[k] / static_cast<double>(T);
  }
  for (std::size_t l = cfg.num_blocks; l-- > 0;)
    block_backward(sc.blocks[l], params.blocks[l], cfg, dh, g.params.blocks[l], g.grad_x0[l]);
  affine_weight_grads(dh, x, g.params.encoder_w, g.params.encoder_b);
  flops::add(flops::Phase::backward, T * H * cfg.input_dim + 2 * C * H + 10 * H);
  return g;
}

}  // namespace

void accumulate(GradientSet& dst, const GradientSet& src) {
  zip_arrays(dst.params, src.params, [](std::span<double> d, std::span<const double> s) { add_into(d, s); });
  if (dst.grad_x0.size() != src.grad_x0.size()) throw UsageError("gradient shapes do not match");
  for (std::size_t l = 0; l < dst.grad_x0.size(); ++l) add_into(dst.grad_x0[l], src.grad_x0[l]);
}

GradientSet model_backward(const ActivationCache& cache, const Matrix& d_logits) {
  if (!cache.params) throw UsageError("activation cache has no parameters attached");
  if (fingerprint(*cache.params) != cache.params_fingerprint)
    throw UsageError("parameters changed since the forward pass that produced this cache");
  const std::size_t B = cache.sequences.size();
  if (d_logits.rows() != B || d_logits.cols() != cache.config.num_classes)
    throw UsageError("d_logits must be batch x classes");

  std::vector<GradientSet> parts(B);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (B > 1)
  for (std::ptrdiff_t bs = 0; bs < static_cast<std::ptrdiff_t>(B); ++bs) {
    try {
      const auto b = static_cast<std::size_t>(bs);
      parts[b] = sequence_backward(cache, b, d_logits.row(b));
    } catch (...) {
#pragma omp critical(lrcssm_backward_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  GradientSet total = GradientSet::zeros(cache.config);
  for (const auto& part : parts) accumulate(total, part);
  return total;
}

}  // namespace lrcssm
