#include <malloc.h>

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "deepgp/commands.hpp"
#include "deepgp/errors.hpp"

namespace {

char delimiter_of(const std::string& s) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s.size() != 1) throw deepgp::ConfigError("--delimiter must be one character or 'tab'");
  return s[0];
}

}  // namespace

int main(int argc, char** argv) {
  using namespace deepgp;
  // Keep large per-iteration temporaries on the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  CLI::App app{"Deep Gaussian process regression: train, predict, evaluate, benchmark, gradcheck"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Fit a model from an INI config");
  train->add_option("config", config_path, "Config file")->required();

  cli::PredictOptions po;
  std::string predict_delim = ",";
  auto* predict = app.add_subcommand("predict", "Predict with a saved model");
  predict->add_option("--model", po.model_path, "Model file")->required();
  predict->add_option("--input", po.input_path, "Input CSV")->required();
  predict->add_option("--output", po.output_path, "Predictions CSV")->capture_default_str();
  predict->add_option("--samples", po.samples, "Monte Carlo paths for deep models")->capture_default_str();
  predict->add_option("--seed", po.seed, "Sampling seed")->capture_default_str();
  predict->add_option("--id-column", po.id_column, "Row id column of the input");
  predict->add_option("--delimiter", predict_delim, "CSV delimiter")->capture_default_str();

  cli::EvaluateOptions eo;
  std::string eval_delim = ",";
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against truth");
  evaluate->add_option("--predictions", eo.predictions_path, "Predictions CSV")->required();
  evaluate->add_option("--truth", eo.truth_path, "Truth CSV")->required();
  evaluate->add_option("--target", eo.target, "Target column of the truth file")->capture_default_str();
  evaluate->add_option("--id-column", eo.id_column, "Row id column of the truth file");
  evaluate->add_option("--labels", eo.label_column, "Partition label column of the truth file");
  evaluate->add_option("--metrics", eo.metrics_path, "Metrics JSON")->capture_default_str();
  evaluate->add_option("--table", eo.table_path, "Per-label MAE CSV")->capture_default_str();
  evaluate->add_option("--kde", eo.kde_path, "KDE curve CSV");
  evaluate->add_option("--delimiter", eval_delim, "CSV delimiter")->capture_default_str();

  std::string spec_path;
  auto* benchmark = app.add_subcommand("benchmark", "Run a synthetic benchmark spec");
  benchmark->add_option("spec", spec_path, "Benchmark spec file")->required();

  cli::GradcheckOptions go;
  double tolerance = 0.0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of a model objective");
  gradcheck->add_option("--family", go.family, "exact, fitc, svgp or dgp")->capture_default_str();
  gradcheck->add_option("--n", go.n, "Rows")->capture_default_str();
  gradcheck->add_option("--m", go.m, "Inducing points")->capture_default_str();
  gradcheck->add_option("--dims", go.dims, "Input dimensions")->capture_default_str();
  gradcheck->add_option("--layers", go.layers, "Deep GP layers")->capture_default_str();
  gradcheck->add_option("--width", go.width, "Hidden width")->capture_default_str();
  gradcheck->add_flag("--ard", go.ard, "ARD kernel");
  gradcheck->add_option("--seed", go.seed, "Seed")->capture_default_str();
  auto* tol_opt = gradcheck->add_option("--tolerance", tolerance, "Max relative error");
  gradcheck->add_option("--step", go.step, "Finite-difference step")->capture_default_str();
  gradcheck->add_option("--report", go.report_path, "JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      cli::cmd_train(config_path);
    } else if (*predict) {
      po.delimiter = delimiter_of(predict_delim);
      cli::cmd_predict(po);
    } else if (*evaluate) {
      eo.delimiter = delimiter_of(eval_delim);
      cli::cmd_evaluate(eo);
    } else if (*benchmark) {
      cli::cmd_benchmark(spec_path);
    } else if (*gradcheck) {
      if (*tol_opt) go.tolerance = tolerance;
      if (!cli::cmd_gradcheck(go, std::cout)) return 4;
    }
  } catch (const Error& e) {
    std::cerr << "deepgp: error: " << e.what() << '\n';
    return cli::exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "deepgp: error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
