#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "flowood/dataset.hpp"
#include "flowood/flow.hpp"

namespace flowood {

enum class BaseKind { gaussian, resampling };

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-5;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  std::size_t num_coupling_layers = 64;
  std::size_t conditioner_depth = 4;   // dense layers per conditioner
  std::size_t conditioner_width = 94;  // hidden channels
  BaseKind base_kind = BaseKind::gaussian;
  double scale_clamp = 3.0;
  std::size_t checkpoint_every = 0;     // epochs between periodic checkpoints; 0 = off
  std::size_t early_stop_patience = 50; // epochs without improvement; 0 = off
  // resampling base
  std::size_t resampling_trunc = 100;
  double resampling_ema_decay = 0.95;
  std::size_t resampling_mc = 1024;  // Z update samples per optimizer step
  // periodic checkpoints land here when non-empty
  std::string checkpoint_dir;
};

struct EpochRecord {
  double train_nll = 0.0;
  double val_metric = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

inline constexpr std::size_t kNoEpoch = static_cast<std::size_t>(-1);

struct TrainReport {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = kNoEpoch;
  std::string val_criterion;  // "auroc", "mean_loglik" or "none"
  std::string checkpoint_path;
};

struct TrainResult {
  FlowModel model;
  TrainReport report;
};

// The model exactly as training would initialize it (identity couplings,
// Monte-Carlo initialized Z for the resampling base). Deterministic in
// config.seed.
FlowModel build_flow(const TrainConfig& config, std::size_t dim);

// Maximum-likelihood training on feasible rows: shuffled mini-batches, mean
// NLL loss, Adam updates, per-step Z maintenance for the resampling base.
// With a labeled validation set the returned model is the epoch with the
// best validation AUROC; with feasible-only validation data the criterion is
// the mean validation log-likelihood; with an empty validation set the final
// model is returned. Fully deterministic given config.seed.
TrainResult train(const TrainConfig& config, const LabeledDataset& train_set,
                  const LabeledDataset& val_set);

}  // namespace flowood
