#include "flowood/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"
#include "flowood/threading.hpp"

namespace flowood {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_both_classes(std::size_t n_pos, std::size_t n_neg, const char* what) {
  if (n_pos == 0 || n_neg == 0)
    throw data_error(std::string(what) + ": need both feasible and infeasible samples (have " +
                     std::to_string(n_pos) + " feasible, " + std::to_string(n_neg) +
                     " infeasible)");
}

}  // namespace

ScoreReport score_dataset(const FlowModel& model, const LabeledDataset& data,
                          const std::string& model_id) {
  if (data.dim != model.dim)
    throw data_error("score_dataset: dataset dim " + std::to_string(data.dim) +
                     " does not match model dim " + std::to_string(model.dim));
  ScoreReport report;
  report.model_id = model_id;
  report.rows.resize(data.size());
  report.latents = Matrix(data.size(), model.dim);
  parallel_for(data.size(), [&](std::size_t i) {
    LogDensityResult r;
    try {
      r = flow_log_prob(model, data.row(i));
    } catch (const Error& e) {
      throw Error(e.category(), "sample '" + data.ids[i] + "': " + e.what());
    }
    if (!std::isfinite(r.total))
      throw numeric_error("sample '" + data.ids[i] + "': non-finite log-likelihood");
    ScoreRow& row = report.rows[i];
    row.id = data.ids[i];
    row.label = data.labels[i];
    row.total = r.total;
    row.base_term = r.base_term;
    row.logdet_term = r.logdet_term;
    std::copy(r.latent.begin(), r.latent.end(), report.latents.row(i).begin());
  });
  return report;
}

ThresholdResult select_threshold(const std::vector<double>& scores,
                                 const std::vector<Label>& labels) {
  if (scores.size() != labels.size())
    throw usage_error("select_threshold: scores and labels length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (Label l : labels) {
    if (l == Label::feasible) ++n_pos;
    else if (l == Label::infeasible) ++n_neg;
  }
  require_both_classes(n_pos, n_neg, "select_threshold");

  // Sort scores ascending with labels; sweep candidates from prefix counts.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> uniq;
  // pos_below[u] / neg_below[u]: labeled counts with score < uniq[u+...]
  std::vector<std::size_t> pos_below{0}, neg_below{0};
  std::size_t cum_pos = 0, cum_neg = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (uniq.empty() || scores[i] != uniq.back()) {
      if (!uniq.empty()) {
        pos_below.push_back(cum_pos);
        neg_below.push_back(cum_neg);
      }
      uniq.push_back(scores[i]);
    }
    if (labels[i] == Label::feasible) ++cum_pos;
    else if (labels[i] == Label::infeasible) ++cum_neg;
  }
  pos_below.push_back(cum_pos);
  neg_below.push_back(cum_neg);

  // Candidates: midpoints between adjacent unique scores; with a single
  // unique score it degenerates to that score (all samples feasible, J = 0).
  ThresholdResult best;
  bool have_best = false;
  const double total_pos = static_cast<double>(n_pos);
  const double total_neg = static_cast<double>(n_neg);
  const std::size_t n_candidates = uniq.size() > 1 ? uniq.size() - 1 : 1;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    const double delta = uniq.size() > 1 ? 0.5 * (uniq[c] + uniq[c + 1]) : uniq[0];
    // feasible verdict for score >= delta; counts below the cut come from
    // the prefix sums at the upper unique value.
    const std::size_t below = uniq.size() > 1 ? c + 1 : 0;
    const double tpr = (total_pos - static_cast<double>(pos_below[below])) / total_pos;
    const double fpr = (total_neg - static_cast<double>(neg_below[below])) / total_neg;
    const double j = tpr - fpr;
    if (!have_best || j > best.youden_j || (j == best.youden_j && delta > best.delta)) {
      best = {delta, j, tpr, fpr};
      have_best = true;
    }
  }
  return best;
}

ThresholdResult select_threshold(const ScoreReport& report) {
  std::vector<double> scores(report.rows.size());
  std::vector<Label> labels(report.rows.size());
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    scores[i] = report.rows[i].total;
    labels[i] = report.rows[i].label;
  }
  return select_threshold(scores, labels);
}

Label classify(double score, double delta) {
  return score < delta ? Label::infeasible : Label::feasible;
}

RocResult roc_curve(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size())
    throw usage_error("roc_curve: scores and labels length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (Label l : labels) {
    if (l == Label::feasible) ++n_pos;
    else if (l == Label::infeasible) ++n_neg;
  }
  require_both_classes(n_pos, n_neg, "auroc");

  std::vector<std::size_t> order;
  order.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::none) order.push_back(i);
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult roc;
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);

  double area = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double score = scores[order[k]];
    std::size_t group_pos = 0, group_neg = 0;
    while (k < order.size() && scores[order[k]] == score) {
      if (labels[order[k]] == Label::feasible) ++group_pos;
      else ++group_neg;
      ++k;
    }
    const double prev_tpr = roc.tpr.back();
    const double prev_fpr = roc.fpr.back();
    tp += group_pos;
    fp += group_neg;
    const double cur_tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double cur_fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    area += (cur_fpr - prev_fpr) * 0.5 * (cur_tpr + prev_tpr);
    roc.thresholds.push_back(score);
    roc.fpr.push_back(cur_fpr);
    roc.tpr.push_back(cur_tpr);
  }
  roc.auroc = area;
  return roc;
}

double auroc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  return roc_curve(scores, labels).auroc;
}

Matrix cosine_similarity_matrix(const Matrix& vectors) {
  const std::size_t n = vectors.rows;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(kernels::sumsq(vectors.row(i).data(), vectors.cols));
    if (norms[i] == 0.0)
      throw data_error("cosine_similarity_matrix: zero vector at index " + std::to_string(i));
  }
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    sim.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v =
          kernels::dot(vectors.row(i).data(), vectors.row(j).data(), vectors.cols) /
          (norms[i] * norms[j]);
      sim.at(i, j) = v;
      sim.at(j, i) = v;
    }
  }
  return sim;
}

void write_scores_csv(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write scores file: " + path);
  const bool with_verdict = report.threshold.has_value();
  out << "id,label,total,base_term,logdet_term";
  if (with_verdict) out << ",verdict";
  out << "\n";
  for (const auto& row : report.rows) {
    out << row.id << ',' << label_token(row.label) << ',' << format_double(row.total) << ','
        << format_double(row.base_term) << ',' << format_double(row.logdet_term);
    if (with_verdict) out << ',' << label_token(row.verdict);
    out << "\n";
  }
  if (!out) throw data_error("failed writing scores file: " + path);
}

LoadedScores load_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("id,label,total,base_term,logdet_term", 0) != 0)
    throw data_error(path + ": header must start with id,label,total,base_term,logdet_term");

  LoadedScores scores;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (fields.size() < 5)
      throw data_error(path + ": line " + std::to_string(line_no) + ": expected >= 5 fields");
    scores.ids.push_back(fields[0]);
    if (fields[1].empty()) scores.labels.push_back(Label::none);
    else if (fields[1] == "feasible") scores.labels.push_back(Label::feasible);
    else if (fields[1] == "infeasible") scores.labels.push_back(Label::infeasible);
    else
      throw data_error(path + ": line " + std::to_string(line_no) + ": unknown label token '" +
                       fields[1] + "'");
    char* end = nullptr;
    for (std::size_t f = 2; f < 5; ++f) {
      const double v = std::strtod(fields[f].c_str(), &end);
      if (end != fields[f].c_str() + fields[f].size())
        throw data_error(path + ": line " + std::to_string(line_no) + ": non-numeric cell '" +
                         fields[f] + "'");
      if (f == 2) scores.totals.push_back(v);
      else if (f == 3) scores.base_terms.push_back(v);
      else scores.logdet_terms.push_back(v);
    }
  }
  return scores;
}

void write_latents_csv(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write latents file: " + path);
  out << "id,label";
  for (std::size_t j = 0; j < report.latents.cols; ++j) out << ",z" << j;
  out << "\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    out << report.rows[i].id << ',' << label_token(report.rows[i].label);
    for (double v : report.latents.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw data_error("failed writing latents file: " + path);
}

void write_roc_csv(const RocResult& roc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write roc file: " + path);
  out << "threshold,fpr,tpr\n";
  for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
    out << format_double(roc.thresholds[i]) << ',' << format_double(roc.fpr[i]) << ','
        << format_double(roc.tpr[i]) << "\n";
  }
  if (!out) throw data_error("failed writing roc file: " + path);
}

void write_similarity_csv(const Matrix& matrix, const std::vector<std::string>& ids,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("cannot write similarity file: " + path);
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << "\n";
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    out << ids[i];
    for (double v : matrix.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw data_error("failed writing similarity file: " + path);
}

}  // namespace flowood
