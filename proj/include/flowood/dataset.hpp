#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowood/matrix.hpp"

namespace flowood {

enum class Label : std::int8_t { none = -1, infeasible = 0, feasible = 1 };

const char* label_token(Label label);  // "", "infeasible", "feasible"

// Embedding matrix with optional per-row labels and unique string ids.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<double> values;  // row-major size() x dim

  std::size_t size() const { return ids.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void append(std::string id, Label label, std::span<const double> features);
  std::size_t count(Label label) const;
  bool has_both_classes() const;
};

// CSV with header `id,label,f0,...,f{h-1}`; label is one of
// feasible/infeasible/empty; floats are written with 17 significant digits
// so save/load round-trips are exact.
LabeledDataset load_dataset(const std::string& path);
void save_dataset(const LabeledDataset& data, const std::string& path);

// Per-assembly node-feature block: `#assembly <id>` sentinel followed by one
// whitespace-separated row of features per part.
struct NodeFeatureBlock {
  std::string id;
  Matrix features;  // parts x dim
};

std::vector<NodeFeatureBlock> load_node_features(const std::string& path);

// Column-wise mean over the part rows; output length is the feature dim
// regardless of the part count.
std::vector<double> mean_pool(const NodeFeatureBlock& block);
std::vector<double> mean_pool(const Matrix& features);

// Split discipline: train keeps feasible rows only, val and test are
// balanced with equal class counts derived from the requested fractions.
// Excess feasible rows flow into train; excess infeasible rows are dropped
// and counted (never silently).
struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  std::size_t dropped_infeasible = 0;
};

SplitResult make_splits(const LabeledDataset& data, double val_frac, double test_frac,
                        std::uint64_t seed);

// Synthetic stand-in benchmark: in-distribution rows from a mixture of
// isotropic Gaussians with means inside a ball, out-of-distribution rows
// from components shifted by ood_shift standard deviations (and optionally
// inflated covariance).
struct SynthSpec {
  std::size_t dim = 94;
  std::size_t n_id = 2000;
  std::size_t n_ood = 400;
  std::size_t components = 4;
  double mean_radius = 3.0;
  double sigma_max = 1.0;
  double ood_shift = 4.0;
  double cov_inflation = 1.0;
  double val_frac = 0.1;
  double test_frac = 0.1;
};

SplitResult synth_benchmark(const SynthSpec& spec, std::uint64_t seed);

// Mixture parameters actually drawn for a given spec/seed; lets diagnostics
// evaluate the exact generating density.
struct SynthComponents {
  Matrix means;      // components x dim
  Matrix ood_means;  // components x dim
  std::vector<double> sigmas;
};

// The raw labeled pool before splitting (exposed for tests and tooling).
LabeledDataset synth_pool(const SynthSpec& spec, std::uint64_t seed,
                          SynthComponents* components = nullptr);

}  // namespace flowood
