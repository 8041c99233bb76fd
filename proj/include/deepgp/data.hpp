#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace deepgp::data {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Row-aligned regression table.
struct Dataset {
  MatrixXd x;                                // n x D
  VectorXd y;                                // n
  std::vector<std::string> labels;           // empty, or one partition label per row
  std::vector<std::string> feature_names;    // D entries (may be empty)
  std::string target_name = "y";
  std::vector<std::int64_t> row_ids;         // empty, or one id per row

  Index size() const { return x.rows(); }
  Index dims() const { return x.cols(); }
  bool has_labels() const { return !labels.empty(); }

  /// Rows in the given order.
  Dataset subset(const std::vector<Index>& rows) const;
  /// Throws LengthMismatch when per-row fields disagree in length.
  void validate() const;
};

struct CsvSchema {
  std::vector<std::string> features;  // empty: every column except target/label/id
  std::string target;                 // empty: no target column (prediction inputs)
  std::string label;                  // optional partition-label column
  std::string row_id;                 // optional id column
  char delimiter = ',';
};

struct IngestResult {
  Dataset dataset;
  Index rejected_rows = 0;
};

/// Reads a headed CSV. Rows with a non-finite or unparsable feature/target
/// value are dropped and counted. Throws SchemaMismatch when a declared column
/// is missing from the header, EmptyAfterFiltering when no rows survive.
IngestResult ingest_csv(const std::string& path, const CsvSchema& schema);

/// Column names of a headed CSV. Throws SchemaMismatch when the file cannot
/// be opened or is empty.
std::vector<std::string> read_csv_header(const std::string& path, char delimiter = ',');

/// Raw string cells of a headed CSV (no type conversion, no filtering).
/// Throws SchemaMismatch on a missing file or a ragged row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position, or -1.
  Index column(const std::string& name) const;
};
CsvTable read_csv_table(const std::string& path, char delimiter = ',');

/// Strict decimal parse of a whole (trimmed) cell.
std::optional<double> parse_number(const std::string& s);

/// Affine per-column map fitted on a training set: z = (x - mean) / scale.
struct Standardizer {
  VectorXd mean;
  VectorXd scale;
  std::vector<bool> constant;  // columns with zero spread (scale forced to 1)

  MatrixXd apply(const MatrixXd& x) const;
  MatrixXd invert(const MatrixXd& z) const;
};

/// Feature and target standardization, population (divide-by-n) variance.
struct StandardizeTransform {
  Standardizer features;
  double target_mean = 0.0;
  double target_scale = 1.0;
  bool target_constant = false;

  Dataset apply(const Dataset& d) const;
  VectorXd invert_target(const VectorXd& y) const;
  /// Maps a standardized-space variance back to target units.
  VectorXd invert_variance(const VectorXd& v) const;
};

/// Projection onto the top-k principal directions of (already standardized)
/// features. Columns of `basis` are orthonormal and sorted by descending
/// variance; each column's largest-magnitude entry is positive.
struct PcaTransform {
  VectorXd mean;       // D
  MatrixXd basis;      // D x k
  VectorXd variances;  // k eigenvalues of the sample covariance (divisor n)
  VectorXd all_variances;  // every eigenvalue, descending

  MatrixXd apply(const MatrixXd& x) const;
  Dataset apply(const Dataset& d) const;
  MatrixXd reconstruct(const MatrixXd& projected) const;
};

/// Throws TooFewPoints when n < 2.
StandardizeTransform fit_standardize(const Dataset& d);

/// Throws KTooLarge unless 1 <= k <= min(n, D).
PcaTransform fit_pca(const Dataset& d, Index k);

/// Seeded shuffle then split into (train, test). Throws InfeasibleSplit.
std::pair<Dataset, Dataset> split(const Dataset& d, Index n_train, Index n_test,
                                  std::uint64_t seed);
std::pair<Dataset, Dataset> split_fractions(const Dataset& d, double train_fraction,
                                            double test_fraction, std::uint64_t seed);

/// Deterministic permutation of 0..n-1.
std::vector<Index> shuffled_indices(Index n, std::uint64_t seed);

}  // namespace deepgp::data
