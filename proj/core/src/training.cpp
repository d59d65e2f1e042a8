#include "lrcssm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <sstream>

#include "lrcssm/config.hpp"
#include "lrcssm/errors.hpp"

namespace lrcssm {

namespace {

std::vector<std::span<double>> mutable_arrays(ModelParams& p) {
  std::vector<std::span<double>> out;
  p.for_each_array([&](const std::string&, std::span<double> a) { out.push_back(a); });
  return out;
}

std::vector<std::span<const double>> const_arrays(const ModelParams& p) {
  std::vector<std::span<const double>> out;
  p.for_each_array([&](const std::string&, std::span<const double> a) { out.push_back(a); });
  return out;
}

std::vector<Matrix> gather(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<Matrix> out;
  out.reserve(indices.size());
  for (auto k : indices) out.push_back(ds.sequences.at(k));
  return out;
}

std::vector<std::size_t> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto k : indices) out.push_back(ds.labels.at(k));
  return out;
}

bool all_finite(const ModelParams& p) {
  bool ok = true;
  p.for_each_array([&](const std::string&, std::span<const double> a) {
    for (double v : a) ok = ok && std::isfinite(v);
  });
  return ok;
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[static_cast<std::size_t>(rng() % k)]);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be at least 1");
  if (!(train_tol > 0.0) || !std::isfinite(train_tol)) throw ConfigError("train.tol must be positive");
  if (!(time_budget_s >= 0.0) || !std::isfinite(time_budget_s))
    throw ConfigError("train.time_budget_s must be finite and non-negative");
  if (grid.size() == 0) throw ConfigError("grid must have at least one point");
  for (double v : grid.lr)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("grid learning rates must be positive");
  for (auto v : grid.hidden)
    if (v < 2) throw ConfigError("grid hidden sizes must be at least 2");
  for (auto v : grid.state)
    if (v < 1) throw ConfigError("grid state sizes must be at least 1");
}

LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  const std::size_t B = logits.rows();
  const std::size_t C = logits.cols();
  if (labels.size() != B) throw UsageError("cross_entropy: label count does not match batch");
  LossResult r{0.0, Matrix(B, C)};
  if (B == 0) return r;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= C) throw UsageError("cross_entropy: label out of range");
    const auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z) + mx;
    r.loss += (log_z - row[labels[b]]) * inv_b;
    for (std::size_t c = 0; c < C; ++c) r.d_logits(b, c) = std::exp(row[c] - log_z) * inv_b;
    r.d_logits(b, labels[b]) -= inv_b;
  }
  return r;
}

OptimState OptimState::zeros(const ModelConfig& cfg) {
  return {ModelParams::zeros(cfg), ModelParams::zeros(cfg), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimState& opt, double lr) {
  auto p = mutable_arrays(params);
  auto m = mutable_arrays(opt.m);
  auto v = mutable_arrays(opt.v);
  const auto g = const_arrays(grads);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw UsageError("adam_step: optimizer state does not match parameters");
  ++opt.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.step));
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (g[a].size() != p[a].size() || m[a].size() != p[a].size() || v[a].size() != p[a].size())
      throw UsageError("adam_step: optimizer state does not match parameters");
    for (std::size_t k = 0; k < p[a].size(); ++k) {
      m[a][k] = kAdamBeta1 * m[a][k] + (1.0 - kAdamBeta1) * g[a][k];
      v[a][k] = kAdamBeta2 * v[a][k] + (1.0 - kAdamBeta2) * g[a][k] * g[a][k];
      p[a][k] -= lr * (m[a][k] / c1) / (std::sqrt(v[a][k] / c2) + kAdamEps);
    }
  }
}

std::string to_json_line(const EpochRecord& rec) {
  std::ostringstream out;
  out << "{\"epoch\":" << rec.epoch << ",\"train_loss\":" << format_double(rec.train_loss)
      << ",\"val_acc\":" << format_double(rec.val_acc) << ",\"mean_solver_iters\":" << format_double(rec.mean_solver_iters)
      << ",\"wall_ms\":" << format_double(rec.wall_ms) << "}";
  return out.str();
}

BatchGradient batch_gradient(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds,
                             std::span<const std::size_t> indices) {
  const auto batch = gather(ds, indices);
  const auto labels = gather_labels(ds, indices);
  ForwardResult fw = forward(params, batch, cfg);
  const LossResult loss = cross_entropy(fw.logits, labels);
  BatchGradient out;
  out.loss = loss.loss;
  out.mean_solver_iters = fw.cache.mean_solver_iterations();
  out.grads = model_backward(fw.cache, loss.d_logits);
  return out;
}

std::vector<std::size_t> predict(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds) {
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> out;
  out.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t end = std::min(ds.size(), start + kChunk);
    const std::span<const Matrix> chunk(ds.sequences.data() + start, end - start);
    const auto fw = forward(params, chunk, cfg);
    for (std::size_t b = 0; b < fw.logits.rows(); ++b) {
      const auto row = fw.logits.row(b);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

double accuracy(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const auto pred = predict(params, cfg, ds);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == ds.labels[k];
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

TrainResult train(const ModelConfig& cfg, const DatasetSplit& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  tc.validate();
  data.train.validate();
  if (data.train.size() == 0) throw ConfigError("training set is empty");
  if (data.train.channels() != cfg.input_dim)
    throw ConfigError("model.input_dim is " + std::to_string(cfg.input_dim) + " but the data has " +
                      std::to_string(data.train.channels()) + " channels");
  if (data.train.class_count() > cfg.num_classes)
    throw ConfigError("model.num_classes is " + std::to_string(cfg.num_classes) + " but the data has " +
                      std::to_string(data.train.class_count()) + " classes");

  ModelConfig train_cfg = cfg;
  train_cfg.solver.tol = tc.train_tol;
  const Dataset& val = data.val.size() ? data.val : data.train;

  TrainResult result{init_params(cfg), {}};
  ModelParams params = result.best;
  OptimState opt = OptimState::zeros(cfg);
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  TrainHistory& h = result.history;
  h.best_val_acc = -1.0;
  std::size_t since_best = 0;
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, rng);
    double loss_sum = 0.0;
    double iter_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(tc.batch_size, order.size() - start));
      BatchGradient bg;
      try {
        bg = batch_gradient(params, train_cfg, data.train, idx);
      } catch (const NumericError&) {
        h.diverged = true;
        break;
      }
      if (!std::isfinite(bg.loss) || !all_finite(bg.grads.params)) {
        h.diverged = true;
        break;
      }
      adam_step(params, bg.grads.params, opt, tc.lr);
      if (!all_finite(params)) {
        h.diverged = true;
        break;
      }
      loss_sum += bg.loss * static_cast<double>(idx.size());
      iter_sum += bg.mean_solver_iters;
      ++batches;
    }
    if (h.diverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    try {
      rec.val_acc = accuracy(params, cfg, val);
    } catch (const NumericError&) {
      h.diverged = true;
      break;
    }
    rec.mean_solver_iters = batches ? iter_sum / static_cast<double>(batches) : 0.0;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    h.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_acc > h.best_val_acc) {
      h.best_val_acc = rec.val_acc;
      h.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (++since_best > tc.patience) {
      h.early_stopped = true;
      break;
    }
    if (tc.time_budget_s > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() >= tc.time_budget_s) {
      h.out_of_time = true;
      break;
    }
  }
  if (h.best_val_acc < 0.0) h.best_val_acc = 0.0;
  return result;
}

GridSearchResult grid_search(const Dataset& data, const ModelConfig& base, const TrainConfig& tc,
                             std::span<const std::uint64_t> split_seeds, SplitFractions fractions,
                             const std::function<void(const GridRow&)>& on_row) {
  tc.validate();
  data.validate();
  if (split_seeds.empty()) throw ConfigError("grid search needs at least one split seed");

  std::vector<DatasetSplit> splits;
  for (auto seed : split_seeds) {
    splits.push_back(split(data, seed, fractions));
    normalize_split(splits.back());
  }

  GridSearchResult out;
  const GridRow* best = nullptr;
  out.table.reserve(tc.grid.size());
  for (double lr : tc.grid.lr)
    for (auto hidden : tc.grid.hidden)
      for (auto state : tc.grid.state)
        for (auto blocks : tc.grid.blocks) {
          GridRow row;
          row.point = {lr, hidden, state, blocks};
          ModelConfig cfg = base;
          cfg.input_dim = data.channels();
          cfg.num_classes = std::max<std::size_t>(base.num_classes, data.class_count());
          cfg.hidden_dim = hidden;
          cfg.state_dim = state;
          cfg.num_blocks = blocks;
          TrainConfig run = tc;
          run.lr = lr;
          row.param_count = ModelParams::zeros(cfg).parameter_count();
          for (const auto& sp : splits) row.val_accs.push_back(train(cfg, sp, run).history.best_val_acc);
          double sum = 0.0;
          for (double a : row.val_accs) sum += a;
          row.mean_val_acc = sum / static_cast<double>(row.val_accs.size());
          out.table.push_back(row);
          if (on_row) on_row(row);
        }
  for (const auto& row : out.table) {
    const bool better = !best || row.mean_val_acc > best->mean_val_acc ||
                        (row.mean_val_acc == best->mean_val_acc &&
                         (row.param_count < best->param_count ||
                          (row.param_count == best->param_count && row.point.lr < best->point.lr)));
    if (better) best = &row;
  }
  out.best = best->point;
  return out;
}

}  // namespace lrcssm
