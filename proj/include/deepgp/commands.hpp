#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "deepgp/errors.hpp"

namespace deepgp::cli {

/// 0 ok, 2 config, 3 data/schema, 4 numeric/training.
int exit_code(ErrorCategory category);

/// Log threshold from DEEPGP_LOG: quiet, info (default) or debug.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };
LogLevel log_level();
void log(LogLevel level, const std::string& message);

/// Fits the configured model; writes the model file and the trace CSV
/// (step, elbo or nll, wall_ms; wall_ms left empty unless [output] timing).
/// Nothing is written when the config or data is rejected.
void cmd_train(const std::string& config_path);

struct PredictOptions {
  std::string model_path;
  std::string input_path;
  std::string output_path = "predictions.csv";
  int samples = 200;
  std::uint64_t seed = 0;
  std::string id_column;  // default: "row_id" when present, else row position
  char delimiter = ',';
};

/// Writes row_id, mean, variance, stddev in target units (observation space).
void cmd_predict(const PredictOptions& options);

struct EvaluateOptions {
  std::string predictions_path;
  std::string truth_path;
  std::string target = "y";
  std::string id_column;     // default: "row_id" when present, else row position
  std::string label_column;  // optional partition labels in the truth file
  std::string metrics_path = "metrics.json";
  std::string table_path = "metrics.csv";
  std::string kde_path;      // optional grid,density,reference CSV
  char delimiter = ',';
};

/// Aligns predictions to truth by row id and writes the metrics JSON and the
/// per-label MAE table. Throws SchemaMismatch on misaligned ids.
void cmd_evaluate(const EvaluateOptions& options);

/// Runs every (spec, model, repetition) cell; writes the per-rep results
/// CSV and the per-(spec, model) summary CSV.
void cmd_benchmark(const std::string& spec_path);

struct GradcheckOptions {
  std::string family = "exact";
  long n = 20;
  long m = 5;
  long dims = 2;
  long layers = 2;
  long width = 2;
  bool ard = false;
  std::uint64_t seed = 0;
  std::optional<double> tolerance;  // default 1e-4 shallow, 1e-3 deep
  double step = 1e-5;
  std::string report_path;          // optional JSON report
};

/// Finite-difference check of the family's objective at a seeded random
/// point. Prints a summary to `out`; returns true when every coordinate passes.
bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace deepgp::cli
