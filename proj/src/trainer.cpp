#include "flowood/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include "flowood/adam.hpp"
#include "flowood/checkpoint.hpp"
#include "flowood/errors.hpp"
#include "flowood/evaluator.hpp"

namespace flowood {
namespace {

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw usage_error("train: batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw usage_error("train: learning_rate must be positive");
  if (cfg.num_coupling_layers < 2) throw usage_error("train: need at least 2 coupling layers");
  if (cfg.conditioner_depth < 1) throw usage_error("train: conditioner_depth must be >= 1");
  if (cfg.conditioner_width < 1) throw usage_error("train: conditioner_width must be >= 1");
  if (!(cfg.scale_clamp > 0.0)) throw usage_error("train: scale_clamp must be positive");
  if (cfg.base_kind == BaseKind::resampling) {
    if (cfg.resampling_trunc < 1) throw usage_error("train: resampling_trunc must be >= 1");
    if (!(cfg.resampling_ema_decay >= 0.0 && cfg.resampling_ema_decay < 1.0))
      throw usage_error("train: resampling_ema_decay must lie in [0, 1)");
    if (cfg.resampling_mc < 1) throw usage_error("train: resampling_mc must be >= 1");
  }
}

void validate_train_set(const LabeledDataset& train_set) {
  if (train_set.size() == 0) throw data_error("train: training set is empty");
  if (train_set.count(Label::infeasible) > 0)
    throw data_error("train: training set contains infeasible rows; the model is fit on "
                     "feasible embeddings only");
  for (double v : train_set.values) {
    if (!std::isfinite(v)) throw data_error("train: training set contains non-finite values");
  }
}

enum class ValCriterion { none, auroc, mean_loglik };

ValCriterion pick_criterion(const LabeledDataset& val_set) {
  if (val_set.size() == 0) return ValCriterion::none;
  if (val_set.has_both_classes()) return ValCriterion::auroc;
  if (val_set.count(Label::feasible) > 0) return ValCriterion::mean_loglik;
  throw data_error("train: validation set has only infeasible rows; cannot form a selection "
                   "criterion");
}

double validation_metric(const FlowModel& model, const LabeledDataset& val_set,
                         ValCriterion criterion) {
  const ScoreReport report = score_dataset(model, val_set);
  if (criterion == ValCriterion::auroc) {
    std::vector<double> scores(report.rows.size());
    std::vector<Label> labels(report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      scores[i] = report.rows[i].total;
      labels[i] = report.rows[i].label;
    }
    return auroc(scores, labels);
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : report.rows) {
    if (row.label == Label::feasible || row.label == Label::none) {
      sum += row.total;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

FlowModel build_flow(const TrainConfig& config, std::size_t dim) {
  validate_config(config);
  Rng root(config.seed);
  Rng init_rng = root.fork(100);

  BaseDistribution base;
  if (config.base_kind == BaseKind::gaussian) {
    base = GaussianBase{dim};
  } else {
    ResamplingBase rb;
    rb.dim = dim;
    rb.trunc = config.resampling_trunc;
    rb.ema_decay = config.resampling_ema_decay;
    Rng accept_rng = root.fork(101);
    rb.accept_net = make_dense_net({dim, config.conditioner_width, config.conditioner_width, 1},
                                   Activation::tanh, Activation::sigmoid, accept_rng, true);
    // Monte-Carlo initialization of the normalizer before any training.
    rb.z_ema = 1.0;
    rb.ema_decay = 0.0;
    Rng z_rng = root.fork(102);
    resampling_update_z(rb, 4096, z_rng);
    rb.ema_decay = config.resampling_ema_decay;
    base = std::move(rb);
  }
  return make_flow_model(dim, config.num_coupling_layers, config.conditioner_depth,
                         config.conditioner_width, config.scale_clamp, std::move(base), init_rng);
}

TrainResult train(const TrainConfig& config, const LabeledDataset& train_set,
                  const LabeledDataset& val_set) {
  validate_config(config);
  validate_train_set(train_set);
  if (val_set.size() > 0 && val_set.dim != train_set.dim)
    throw data_error("train: validation set dim does not match training set dim");

  FlowModel model = build_flow(config, train_set.dim);
  const ValCriterion criterion = pick_criterion(val_set);

  TrainReport report;
  report.val_criterion = criterion == ValCriterion::none
                             ? "none"
                             : (criterion == ValCriterion::auroc ? "auroc" : "mean_loglik");

  const std::size_t n_params = parameter_count(model);
  std::vector<double> flat_params(n_params);
  std::vector<double> flat_grads(n_params);
  gather_parameters(model, flat_params);
  AdamState adam(n_params);

  Rng root(config.seed);
  Rng shuffle_rng = root.fork(200);
  Rng mc_rng = root.fork(201);

  std::vector<std::size_t> indices(train_set.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  BatchGradient batch_ctx;
  FlowGradients grads;
  std::vector<std::span<const double>> batch;

  FlowModel best_model = model;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Fisher-Yates shuffle
    for (std::size_t i = indices.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_u64() % i;
      std::swap(indices[i - 1], indices[j]);
    }

    double nll_weighted = 0.0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < indices.size(); begin += config.batch_size, ++step) {
      const std::size_t end = std::min(begin + config.batch_size, indices.size());
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(train_set.row(indices[k]));

      if (auto* rb = std::get_if<ResamplingBase>(&model.base)) {
        resampling_update_z(*rb, config.resampling_mc, mc_rng);
      }

      double nll = 0.0;
      try {
        nll = batch_ctx.evaluate(model, batch, grads);
      } catch (const Error& e) {
        // map batch positions back to dataset rows for the diagnostics
        std::string rows;
        for (std::size_t k = begin; k < end; ++k) {
          if (!rows.empty()) rows += ",";
          rows += train_set.ids[indices[k]];
        }
        throw Error(e.category(), "train: epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(step) + " (rows " + rows + "): " + e.what());
      }
      if (!std::isfinite(nll))
        throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(step));

      gather_gradients(grads, flat_grads);
      try {
        adam_step(flat_params, flat_grads, adam, config.learning_rate);
      } catch (const Error& e) {
        throw Error(e.category(), "train: epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(step) + ": " + e.what());
      }
      scatter_parameters(model, flat_params);
      nll_weighted += nll * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.train_nll = nll_weighted / static_cast<double>(train_set.size());
    if (criterion != ValCriterion::none) {
      record.val_metric = validation_metric(model, val_set, criterion);
    }
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.history.push_back(record);

    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
        (epoch + 1) % config.checkpoint_every == 0) {
      const auto path = std::filesystem::path(config.checkpoint_dir) /
                        ("checkpoint_epoch_" + std::to_string(epoch) + ".ckpt");
      save_checkpoint(model, path.string());
    }

    if (criterion != ValCriterion::none) {
      if (record.val_metric > best_metric) {
        best_metric = record.val_metric;
        best_model = model;
        report.best_epoch = epoch;
        epochs_since_improvement = 0;
      } else {
        ++epochs_since_improvement;
        if (config.early_stop_patience > 0 &&
            epochs_since_improvement >= config.early_stop_patience) {
          break;
        }
      }
    }
  }

  TrainResult result;
  if (criterion != ValCriterion::none && report.best_epoch != kNoEpoch) {
    result.model = std::move(best_model);
  } else {
    result.model = std::move(model);
    report.best_epoch = report.history.empty() ? kNoEpoch : report.history.size() - 1;
  }
  result.report = std::move(report);
  return result;
}

}  // namespace flowood
