#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepgp/data.hpp"
#include "deepgp/model.hpp"
#include "deepgp/synth.hpp"

namespace deepgp::cli {

/// `deepgp train` configuration (INI):
///
///   [data]    path, target, features, label, row_id, delimiter
///   [model]   family, layers, hidden_width, inducing, ard, pca, subsample, initial_noise
///   [train]   seed, max_steps, learning_rate, batch_size, mc_samples, tolerance
///   [output]  model, trace, timing
///
/// Relative paths resolve against the config file's directory. Unknown
/// sections or keys are errors.
struct TrainRunConfig {
  std::string data_path;
  data::CsvSchema schema;
  ModelConfig model;
  std::uint64_t seed = 0;
  std::string model_path = "model.json";
  std::string trace_path = "trace.csv";
  bool timing = false;
};

/// Throws ConfigError (and whatever ModelConfig::validate throws).
TrainRunConfig load_train_config(const std::string& path);

/// `deepgp benchmark` spec file (INI):
///
///   [benchmark]     repetitions, output, summary, timing (optional section)
///   [spec.<id>]     kind, dimensions, noise, n_train, n_test, seed, variance,
///                   lengthscale, input_low, input_high, input_levels
///   [model.<id>]    the [model] and [train] keys above, plus samples
///
/// n_train may list several sizes ("1000, 5000"); each size becomes its own
/// spec with id "<id>_n<size>".
struct BenchmarkRunConfig {
  std::vector<synth::BenchmarkSpec> specs;
  std::vector<synth::BenchmarkModel> models;
  int repetitions = 5;
  std::string output_path = "benchmark.csv";
  std::string summary_path = "benchmark_summary.csv";
  bool timing = false;
};

BenchmarkRunConfig load_benchmark_config(const std::string& path);

}  // namespace deepgp::cli
