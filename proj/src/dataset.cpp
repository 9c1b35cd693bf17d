#include "flowood/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "flowood/errors.hpp"
#include "flowood/kernels.hpp"
#include "flowood/rng.hpp"

namespace flowood {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line_no) {
  if (field.empty())
    throw data_error("line " + std::to_string(line_no) + ": empty numeric field");
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + field.size())
    throw data_error("line " + std::to_string(line_no) + ": non-numeric cell '" + field + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
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
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

Label parse_label(const std::string& token, std::size_t line_no) {
  if (token.empty()) return Label::none;
  if (token == "feasible") return Label::feasible;
  if (token == "infeasible") return Label::infeasible;
  throw data_error("line " + std::to_string(line_no) + ": unknown label token '" + token + "'");
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

void copy_rows(const LabeledDataset& src, const std::vector<std::size_t>& order,
               std::size_t begin, std::size_t end, LabeledDataset& dst) {
  for (std::size_t k = begin; k < end; ++k) {
    const std::size_t i = order[k];
    dst.append(src.ids[i], src.labels[i], src.row(i));
  }
}

}  // namespace

const char* label_token(Label label) {
  switch (label) {
    case Label::feasible:
      return "feasible";
    case Label::infeasible:
      return "infeasible";
    default:
      return "";
  }
}

void LabeledDataset::append(std::string id, Label label, std::span<const double> features) {
  if (dim == 0) dim = features.size();
  if (features.size() != dim) throw data_error("dataset append: row length mismatch");
  ids.push_back(std::move(id));
  labels.push_back(label);
  values.insert(values.end(), features.begin(), features.end());
}

std::size_t LabeledDataset::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

bool LabeledDataset::has_both_classes() const {
  return count(Label::feasible) > 0 && count(Label::infeasible) > 0;
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open dataset file: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  ++line_no;
  const std::vector<std::string> header = split_csv(strip_cr(line));
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw data_error(path + ": header must be id,label,f0,...");
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j + 2] != "f" + std::to_string(j))
      throw data_error(path + ": feature column " + std::to_string(j) + " must be named f" +
                       std::to_string(j));
  }

  LabeledDataset data;
  data.dim = dim;
  std::unordered_set<std::string> seen;
  std::vector<double> row(dim);
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != dim + 2)
      throw data_error(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim + 2) + " fields, got " + std::to_string(fields.size()));
    if (fields[0].empty())
      throw data_error(path + ": line " + std::to_string(line_no) + ": empty id");
    if (!seen.insert(fields[0]).second)
      throw data_error(path + ": line " + std::to_string(line_no) + ": duplicate id '" +
                       fields[0] + "'");
    const Label label = parse_label(fields[1], line_no);
    for (std::size_t j = 0; j < dim; ++j) row[j] = parse_double(fields[j + 2], line_no);
    data.append(fields[0], label, row);
  }
  return data;
}

void save_dataset(const LabeledDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw usage_error("cannot write dataset file: " + path);
  out << "id,label";
  for (std::size_t j = 0; j < data.dim; ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i] << ',' << label_token(data.labels[i]);
    const auto row = data.row(i);
    for (double v : row) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw data_error("failed writing dataset file: " + path);
}

std::vector<NodeFeatureBlock> load_node_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open node-feature file: " + path);
  std::vector<NodeFeatureBlock> blocks;
  std::vector<std::vector<double>> rows;
  std::string pending_id;
  bool in_block = false;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::string line;

  auto flush = [&](std::size_t at_line) {
    if (!in_block) return;
    if (rows.empty())
      throw data_error(path + ": line " + std::to_string(at_line) + ": assembly '" + pending_id +
                       "' has no part rows");
    NodeFeatureBlock block;
    block.id = pending_id;
    block.features = Matrix(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].begin(), rows[i].end(), block.features.row(i).begin());
    blocks.push_back(std::move(block));
    rows.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("#assembly", 0) == 0) {
      flush(line_no);
      std::string id = line.substr(9);
      const std::size_t start = id.find_first_not_of(" \t");
      if (start == std::string::npos)
        throw data_error(path + ": line " + std::to_string(line_no) + ": missing assembly id");
      pending_id = id.substr(start);
      in_block = true;
      continue;
    }
    if (!in_block)
      throw data_error(path + ": line " + std::to_string(line_no) +
                       ": feature row before any #assembly sentinel");
    std::istringstream ss(line);
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) row.push_back(parse_double(tok, line_no));
    if (row.empty())
      throw data_error(path + ": line " + std::to_string(line_no) + ": empty feature row");
    if (dim == 0) dim = row.size();
    if (row.size() != dim)
      throw data_error(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " features, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  flush(line_no + 1);
  if (blocks.empty()) throw data_error(path + ": no assembly blocks found");
  return blocks;
}

std::vector<double> mean_pool(const Matrix& features) {
  if (features.rows == 0) throw data_error("mean_pool: empty node-feature block");
  std::vector<double> acc(features.cols, 0.0);
  for (std::size_t i = 0; i < features.rows; ++i) {
    kernels::axpy(1.0, features.row(i).data(), acc.data(), features.cols);
  }
  for (double& v : acc) v /= static_cast<double>(features.rows);
  return acc;
}

std::vector<double> mean_pool(const NodeFeatureBlock& block) { return mean_pool(block.features); }

SplitResult make_splits(const LabeledDataset& data, double val_frac, double test_frac,
                        std::uint64_t seed) {
  if (!(val_frac > 0.0 && val_frac < 1.0 && test_frac > 0.0 && test_frac < 1.0 &&
        val_frac + test_frac < 1.0))
    throw usage_error("make_splits: fractions must lie in (0,1) and sum below 1");

  std::vector<std::size_t> feas, infeas;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == Label::feasible) feas.push_back(i);
    else if (data.labels[i] == Label::infeasible) infeas.push_back(i);
    else
      throw data_error("make_splits: row '" + data.ids[i] + "' is unlabeled");
  }
  const std::size_t n = data.size();
  const std::size_t val_pc =
      static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n))) / 2;
  const std::size_t test_pc =
      static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n))) / 2;
  const std::size_t need = val_pc + test_pc;
  if (val_pc == 0 || test_pc == 0 || feas.size() < need + 1 || infeas.size() < need)
    throw data_error("make_splits: too few rows per class for non-empty balanced splits (need " +
                     std::to_string(need) + " per class plus training data, have " +
                     std::to_string(feas.size()) + " feasible / " + std::to_string(infeas.size()) +
                     " infeasible)");

  Rng rng(seed);
  Rng feas_rng = rng.fork(1);
  Rng infeas_rng = rng.fork(2);
  shuffle_indices(feas, feas_rng);
  shuffle_indices(infeas, infeas_rng);

  SplitResult out;
  out.train.dim = out.val.dim = out.test.dim = data.dim;
  copy_rows(data, feas, 0, val_pc, out.val);
  copy_rows(data, infeas, 0, val_pc, out.val);
  copy_rows(data, feas, val_pc, need, out.test);
  copy_rows(data, infeas, val_pc, need, out.test);
  copy_rows(data, feas, need, feas.size(), out.train);
  out.dropped_infeasible = infeas.size() - need;
  return out;
}

LabeledDataset synth_pool(const SynthSpec& spec, std::uint64_t seed,
                          SynthComponents* components) {
  if (spec.dim == 0 || spec.n_id == 0 || spec.n_ood == 0 || spec.components == 0 ||
      !(spec.sigma_max > 0.0) || !(spec.cov_inflation > 0.0) || spec.mean_radius < 0.0 ||
      spec.ood_shift < 0.0)
    throw usage_error("synth_benchmark: invalid spec values");

  Rng rng(seed);
  Rng center_rng = rng.fork(10);
  Rng id_rng = rng.fork(11);
  Rng ood_rng = rng.fork(12);

  const std::size_t k = spec.components;
  std::vector<std::vector<double>> means(k, std::vector<double>(spec.dim));
  std::vector<double> sigmas(k);
  for (std::size_t c = 0; c < k; ++c) {
    // uniform in the ball of radius mean_radius
    center_rng.fill_normal(means[c]);
    const double norm = std::sqrt(kernels::sumsq(means[c].data(), spec.dim));
    const double r = spec.mean_radius *
                     std::pow(center_rng.uniform(), 1.0 / static_cast<double>(spec.dim));
    const double f = norm > 0.0 ? r / norm : 0.0;
    for (double& v : means[c]) v *= f;
    sigmas[c] = spec.sigma_max * (0.5 + 0.5 * center_rng.uniform());
  }

  // One shifted center per component; resampled until it clears every
  // in-distribution mean by the requested number of standard deviations.
  std::vector<std::vector<double>> ood_means(k, std::vector<double>(spec.dim));
  std::vector<double> dir(spec.dim);
  for (std::size_t c = 0; c < k; ++c) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      center_rng.fill_normal(dir);
      const double norm = std::sqrt(kernels::sumsq(dir.data(), spec.dim));
      const double f = norm > 0.0 ? spec.ood_shift * sigmas[c] / norm : 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) ood_means[c][j] = means[c][j] + f * dir[j];
      bool clear = true;
      for (std::size_t o = 0; o < k && clear; ++o) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
          const double d = ood_means[c][j] - means[o][j];
          d2 += d * d;
        }
        if (std::sqrt(d2) + 1e-12 < spec.ood_shift * sigmas[o]) clear = false;
      }
      if (clear) break;
    }
  }

  if (components) {
    components->means = Matrix(k, spec.dim);
    components->ood_means = Matrix(k, spec.dim);
    components->sigmas = sigmas;
    for (std::size_t c = 0; c < k; ++c) {
      std::copy(means[c].begin(), means[c].end(), components->means.row(c).begin());
      std::copy(ood_means[c].begin(), ood_means[c].end(), components->ood_means.row(c).begin());
    }
  }

  LabeledDataset pool;
  pool.dim = spec.dim;
  std::vector<double> row(spec.dim);
  char id_buf[32];
  for (std::size_t i = 0; i < spec.n_id; ++i) {
    const std::size_t c = id_rng.next_u64() % k;
    id_rng.fill_normal(row);
    for (std::size_t j = 0; j < spec.dim; ++j) row[j] = means[c][j] + sigmas[c] * row[j];
    std::snprintf(id_buf, sizeof(id_buf), "id-%06zu", i);
    pool.append(id_buf, Label::feasible, row);
  }
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    const std::size_t c = ood_rng.next_u64() % k;
    ood_rng.fill_normal(row);
    const double s = sigmas[c] * spec.cov_inflation;
    for (std::size_t j = 0; j < spec.dim; ++j) row[j] = ood_means[c][j] + s * row[j];
    std::snprintf(id_buf, sizeof(id_buf), "ood-%06zu", i);
    pool.append(id_buf, Label::infeasible, row);
  }
  return pool;
}

SplitResult synth_benchmark(const SynthSpec& spec, std::uint64_t seed) {
  const LabeledDataset pool = synth_pool(spec, seed);
  return make_splits(pool, spec.val_frac, spec.test_frac, mix64(seed ^ 0xBA1A9CED));
}

}  // namespace flowood
