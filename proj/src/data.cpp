#include "deepgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "deepgp/errors.hpp"

namespace deepgp::data {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record; double quotes group a field and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

Index column_of(const std::vector<std::string>& header, const std::string& name,
                const std::string& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaMismatch("column '" + name + "' not found in " + path);
  return static_cast<Index>(it - header.begin());
}

}  // namespace

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  out.feature_names = feature_names;
  out.target_name = target_name;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    out.x.row(static_cast<Index>(i)) = x.row(r);
    if (y.size() > 0) out.y(static_cast<Index>(i)) = y(r);
    if (has_labels()) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
    if (!row_ids.empty()) out.row_ids.push_back(row_ids[static_cast<std::size_t>(r)]);
  }
  if (y.size() == 0) out.y.resize(0);
  return out;
}

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != x.rows()) throw LengthMismatch("targets and feature rows differ in count");
  if (!labels.empty() && labels.size() != n) throw LengthMismatch("labels and rows differ in count");
  if (!row_ids.empty() && row_ids.size() != n) throw LengthMismatch("row ids and rows differ in count");
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != x.cols()) {
    throw LengthMismatch("feature names and columns differ in count");
  }
}

std::vector<std::string> read_csv_header(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch(path + " has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  return split_record(line, delimiter);
}

Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<Index>(it - header.begin());
}

CsvTable read_csv_table(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch(path + " has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  CsvTable t;
  t.header = split_record(line, delimiter);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_record(line, delimiter);
    if (fields.size() != t.header.size())
      throw SchemaMismatch(path + ":" + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

std::optional<double> parse_number(const std::string& s) { return parse_double(trim(s)); }

IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch(path + " has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_record(line, schema.delimiter);

  std::vector<std::string> features = schema.features;
  if (features.empty()) {
    for (const auto& h : header) {
      if (h != schema.target && h != schema.label && h != schema.row_id) features.push_back(h);
    }
  }
  std::vector<Index> feature_cols;
  for (const auto& f : features) feature_cols.push_back(column_of(header, f, path));
  const Index target_col = schema.target.empty() ? -1 : column_of(header, schema.target, path);
  const Index label_col = schema.label.empty() ? -1 : column_of(header, schema.label, path);
  const Index id_col = schema.row_id.empty() ? -1 : column_of(header, schema.row_id, path);

  std::vector<double> xs, ys;
  IngestResult result;
  Dataset& d = result.dataset;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw SchemaMismatch(path + ":" + std::to_string(line_no) + " has " +
                           std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(header.size()));
    }
    bool ok = true;
    std::vector<double> row;
    row.reserve(feature_cols.size());
    for (Index c : feature_cols) {
      const auto v = parse_double(fields[static_cast<std::size_t>(c)]);
      if (!v || !std::isfinite(*v)) ok = false;
      row.push_back(v.value_or(0.0));
    }
    double target = 0.0;
    if (target_col >= 0) {
      const auto v = parse_double(fields[static_cast<std::size_t>(target_col)]);
      if (!v || !std::isfinite(*v)) ok = false;
      target = v.value_or(0.0);
    }
    std::int64_t id = 0;
    if (id_col >= 0) {
      const auto& s = fields[static_cast<std::size_t>(id_col)];
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
      if (ec != std::errc() || ptr != s.data() + s.size()) ok = false;
    }
    if (!ok) {
      ++result.rejected_rows;
      continue;
    }
    xs.insert(xs.end(), row.begin(), row.end());
    ys.push_back(target);
    if (label_col >= 0) d.labels.push_back(fields[static_cast<std::size_t>(label_col)]);
    if (id_col >= 0) d.row_ids.push_back(id);
  }

  const auto n = static_cast<Index>(ys.size());
  if (n == 0) throw EmptyAfterFiltering(path + " has no usable rows");
  const auto dims = static_cast<Index>(feature_cols.size());
  d.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, dims);
  d.y = target_col >= 0 ? VectorXd(Eigen::Map<const VectorXd>(ys.data(), n)) : VectorXd(n);
  if (target_col < 0) d.y.setZero();
  d.feature_names = features;
  if (!schema.target.empty()) d.target_name = schema.target;
  return result;
}

// ---------------------------------------------------------------- standardize

MatrixXd Standardizer::apply(const MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw DimensionMismatch("standardizer fitted on " + std::to_string(mean.size()) +
                            " columns, got " + std::to_string(x.cols()));
  }
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

MatrixXd Standardizer::invert(const MatrixXd& z) const {
  if (z.cols() != mean.size()) throw DimensionMismatch("standardizer column count mismatch");
  return (z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

Dataset StandardizeTransform::apply(const Dataset& d) const {
  Dataset out = d;
  out.x = features.apply(d.x);
  out.y = (d.y.array() - target_mean) / target_scale;
  return out;
}

VectorXd StandardizeTransform::invert_target(const VectorXd& y) const {
  return (y.array() * target_scale + target_mean).matrix();
}

VectorXd StandardizeTransform::invert_variance(const VectorXd& v) const {
  return v * (target_scale * target_scale);
}

StandardizeTransform fit_standardize(const Dataset& d) {
  if (d.size() < 2) throw TooFewPoints("standardization needs at least 2 rows");
  StandardizeTransform t;
  const double n = static_cast<double>(d.size());
  t.features.mean = d.x.colwise().mean().transpose();
  t.features.scale.resize(d.dims());
  t.features.constant.assign(static_cast<std::size_t>(d.dims()), false);
  for (Index c = 0; c < d.dims(); ++c) {
    const double var = (d.x.col(c).array() - t.features.mean(c)).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(t.features.mean(c)))) {
      t.features.scale(c) = sd;
    } else {
      t.features.scale(c) = 1.0;
      t.features.constant[static_cast<std::size_t>(c)] = true;
    }
  }
  t.target_mean = d.y.mean();
  const double sd = std::sqrt((d.y.array() - t.target_mean).square().sum() / n);
  if (sd > 1e-12 * std::max(1.0, std::abs(t.target_mean))) {
    t.target_scale = sd;
  } else {
    t.target_constant = true;
  }
  return t;
}

// ---------------------------------------------------------------- pca

MatrixXd PcaTransform::apply(const MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw DimensionMismatch("PCA fitted on " + std::to_string(mean.size()) + " columns, got " +
                            std::to_string(x.cols()));
  }
  return (x.rowwise() - mean.transpose()) * basis;
}

Dataset PcaTransform::apply(const Dataset& d) const {
  Dataset out = d;
  out.x = apply(d.x);
  out.feature_names.clear();
  for (Index c = 0; c < basis.cols(); ++c) out.feature_names.push_back("pc" + std::to_string(c + 1));
  return out;
}

MatrixXd PcaTransform::reconstruct(const MatrixXd& projected) const {
  return (projected * basis.transpose()).rowwise() + mean.transpose();
}

PcaTransform fit_pca(const Dataset& d, Index k) {
  if (k < 1 || k > std::min(d.size(), d.dims())) {
    throw KTooLarge("k=" + std::to_string(k) + " must lie in [1, min(n=" +
                    std::to_string(d.size()) + ", D=" + std::to_string(d.dims()) + ")]");
  }
  PcaTransform t;
  t.mean = d.x.colwise().mean().transpose();
  const MatrixXd centered = d.x.rowwise() - t.mean.transpose();
  const MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(d.size());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  const Index dims = d.dims();
  t.all_variances = eig.eigenvalues().reverse().cwiseMax(0.0);
  t.variances = t.all_variances.head(k);
  t.basis.resize(dims, k);
  for (Index c = 0; c < k; ++c) {
    VectorXd v = eig.eigenvectors().col(dims - 1 - c);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    t.basis.col(c) = v;
  }
  return t;
}

// ---------------------------------------------------------------- split

std::vector<Index> shuffled_indices(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::pair<Dataset, Dataset> split(const Dataset& d, Index n_train, Index n_test,
                                  std::uint64_t seed) {
  if (n_train < 0 || n_test < 0 || n_train + n_test > d.size()) {
    throw InfeasibleSplit("cannot take " + std::to_string(n_train) + " + " +
                          std::to_string(n_test) + " rows from " + std::to_string(d.size()));
  }
  const auto idx = shuffled_indices(d.size(), seed);
  const std::vector<Index> train(idx.begin(), idx.begin() + n_train);
  const std::vector<Index> test(idx.begin() + n_train, idx.begin() + n_train + n_test);
  return {d.subset(train), d.subset(test)};
}

std::pair<Dataset, Dataset> split_fractions(const Dataset& d, double train_fraction,
                                            double test_fraction, std::uint64_t seed) {
  if (train_fraction < 0.0 || test_fraction < 0.0 || train_fraction + test_fraction > 1.0 + 1e-12) {
    throw InfeasibleSplit("fractions must be non-negative and sum to at most 1");
  }
  const auto n = static_cast<double>(d.size());
  const auto n_train = static_cast<Index>(std::llround(train_fraction * n));
  const auto n_test = std::min<Index>(static_cast<Index>(std::llround(test_fraction * n)),
                                      d.size() - n_train);
  return split(d, n_train, n_test, seed);
}

}  // namespace deepgp::data
