#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowood/dataset.hpp"
#include "flowood/flow.hpp"

namespace flowood {

// Per-sample decomposed log-likelihood score. `total` is always the literal
// sum of base_term and logdet_term.
struct ScoreRow {
  std::string id;
  Label label = Label::none;
  double total = 0.0;
  double base_term = 0.0;
  double logdet_term = 0.0;
  Label verdict = Label::none;
};

struct ScoreReport {
  std::vector<ScoreRow> rows;
  Matrix latents;  // one latent row per sample
  std::string model_id;
  std::optional<double> threshold;
};

// Scores every row of the dataset with the trained flow; order preserved,
// parallel over samples.
ScoreReport score_dataset(const FlowModel& model, const LabeledDataset& data,
                          const std::string& model_id = "");

// Youden's J threshold selection over midpoints of adjacent sorted scores.
// Ties prefer the larger threshold. Requires both classes.
struct ThresholdResult {
  double delta = 0.0;
  double youden_j = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

ThresholdResult select_threshold(const std::vector<double>& scores,
                                 const std::vector<Label>& labels);
ThresholdResult select_threshold(const ScoreReport& report);

// feasible iff score >= delta (strict `<` flags infeasible).
Label classify(double score, double delta);

// ROC sweep over unique thresholds in descending order, with (0,0) and (1,1)
// endpoints; auroc is the trapezoidal area. Positive class = feasible.
struct RocResult {
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auroc = 0.0;
};

RocResult roc_curve(const std::vector<double>& scores, const std::vector<Label>& labels);
double auroc(const std::vector<double>& scores, const std::vector<Label>& labels);

// Symmetric matrix of cosine similarities; errors on zero vectors.
Matrix cosine_similarity_matrix(const Matrix& vectors);

// --- file formats shared with the CLI ---

void write_scores_csv(const ScoreReport& report, const std::string& path);

struct LoadedScores {
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<double> totals;
  std::vector<double> base_terms;
  std::vector<double> logdet_terms;
};

LoadedScores load_scores_csv(const std::string& path);

void write_latents_csv(const ScoreReport& report, const std::string& path);
void write_roc_csv(const RocResult& roc, const std::string& path);
void write_similarity_csv(const Matrix& matrix, const std::vector<std::string>& ids,
                          const std::string& path);

}  // namespace flowood
