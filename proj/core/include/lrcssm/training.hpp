#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrcssm/data.hpp"
#include "lrcssm/gradients.hpp"
#include "lrcssm/network.hpp"

namespace lrcssm {

struct GridSpec {
  std::vector<double> lr{1e-5, 1e-4, 1e-3};
  std::vector<std::size_t> hidden{16, 64, 128};
  std::vector<std::size_t> state{16, 64, 256};
  std::vector<std::size_t> blocks{2, 4, 6};

  std::size_t size() const { return lr.size() * hidden.size() * state.size() * blocks.size(); }
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  /// Solver tolerance used while training; evaluation uses the model's own.
  double train_tol = 1e-4;
  /// Stop after the epoch that crosses this many seconds (0 = no limit).
  /// Runs that hit it are not reproducible.
  double time_budget_s = 0.0;
  GridSpec grid;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Matrix d_logits;  // B x C, gradient of the batch-mean loss
};

/// Mean softmax cross-entropy, max-subtracted.
LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

struct OptimState {
  ModelParams m;
  ModelParams v;
  std::size_t step = 0;

  static OptimState zeros(const ModelConfig& cfg);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Bias-corrected Adam update in place.
void adam_step(ModelParams& params, const ModelParams& grads, OptimState& opt, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double mean_solver_iters = 0.0;
  double wall_ms = 0.0;
};

/// {"epoch":..,"train_loss":..,"val_acc":..,"mean_solver_iters":..,"wall_ms":..}
std::string to_json_line(const EpochRecord& rec);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  bool early_stopped = false;
  bool out_of_time = false;
  bool diverged = false;
};

struct TrainResult {
  ModelParams best;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with early stopping on validation accuracy. Returns the
/// parameters of the best validation epoch.
TrainResult train(const ModelConfig& cfg, const DatasetSplit& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

/// Loss and gradient over one batch, batch items processed in parallel and
/// reduced in index order.
struct BatchGradient {
  double loss = 0.0;
  GradientSet grads;
  double mean_solver_iters = 0.0;
};

BatchGradient batch_gradient(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds,
                             std::span<const std::size_t> indices);

std::vector<std::size_t> predict(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds);
double accuracy(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds);

struct GridPoint {
  double lr = 1e-3;
  std::size_t hidden = 16;
  std::size_t state = 16;
  std::size_t blocks = 2;
};

struct GridRow {
  GridPoint point;
  std::vector<double> val_accs;  // one per split seed
  double mean_val_acc = 0.0;
  std::size_t param_count = 0;
};

struct GridSearchResult {
  GridPoint best;
  std::vector<GridRow> table;
};

/// Every grid point is trained on each split seed; the point with the best
/// mean validation accuracy wins, ties going to fewer parameters and then
/// the lower learning rate.
GridSearchResult grid_search(const Dataset& data, const ModelConfig& base, const TrainConfig& tc,
                             std::span<const std::uint64_t> split_seeds, SplitFractions fractions = {},
                             const std::function<void(const GridRow&)>& on_row = {});

inline constexpr std::uint64_t kDefaultSplitSeeds[5] = {2345, 3456, 4567, 5678, 6789};

}  // namespace lrcssm
