#include "deepgp/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "deepgp/artifact.hpp"
#include "deepgp/config.hpp"
#include "deepgp/data.hpp"
#include "deepgp/dgp.hpp"
#include "deepgp/eval.hpp"
#include "deepgp/exact_gp.hpp"
#include "deepgp/fitc.hpp"
#include "deepgp/model.hpp"
#include "deepgp/opt.hpp"
#include "deepgp/synth.hpp"

namespace deepgp::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write output file '" + path + "'");
  return out;
}

Index require_column(const data::CsvTable& t, const std::string& name, const std::string& path) {
  const Index c = t.column(name);
  if (c < 0) throw SchemaMismatch("column '" + name + "' not found in " + path);
  return c;
}

// Explicit id column, else "row_id" when present, else -1 (row position).
Index id_column(const data::CsvTable& t, const std::string& requested, const std::string& path) {
  if (!requested.empty()) return require_column(t, requested, path);
  return t.column("row_id");
}

double cell_number(const std::string& cell, const std::string& what) {
  const auto v = data::parse_number(cell);
  if (!v || !std::isfinite(*v)) throw FormatError(what + " is not a finite number: '" + cell + "'");
  return *v;
}

}  // namespace

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numeric: return 4;
  }
  return 4;
}

LogLevel log_level() {
  const char* env = std::getenv("DEEPGP_LOG");
  if (!env) return LogLevel::info;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

void log(LogLevel level, const std::string& message) {
  if (level == LogLevel::quiet || static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "deepgp: " << message << '\n';
}

// ------------------------------------------------------------------ train

void cmd_train(const std::string& config_path) {
  const TrainRunConfig cfg = load_train_config(config_path);
  const data::IngestResult in = data::ingest_csv(cfg.data_path, cfg.schema);
  log(LogLevel::info, "read " + std::to_string(in.dataset.size()) + " rows from " + cfg.data_path +
                          " (" + std::to_string(in.rejected_rows) + " rejected)");

  const TrainResult r = fit_model(in.dataset, cfg.model, cfg.seed, cfg.timing);
  log(LogLevel::info, "fitted " + to_string(cfg.model.family) + " in " + std::to_string(r.model.meta.steps) +
                          " steps, final objective " + num(r.model.meta.final_objective));

  save_model(r.model, cfg.model_path);
  std::ofstream trace = open_output(cfg.trace_path);
  // Variational families report the ELBO itself, the others their negative log marginal.
  const bool variational = cfg.model.family == ModelFamily::svgp || cfg.model.family == ModelFamily::dgp;
  trace << (variational ? "step,elbo,wall_ms\n" : "step,nll,wall_ms\n");
  for (const auto& e : r.trace)
    trace << e.step << ',' << num(variational ? -e.objective : e.objective) << ','
          << (e.wall_ms ? num(*e.wall_ms) : "") << '\n';
  log(LogLevel::info, "wrote " + cfg.model_path + " and " + cfg.trace_path);
}

// ---------------------------------------------------------------- predict

void cmd_predict(const PredictOptions& o) {
  if (o.samples < 1) throw ConfigError("--samples must be >= 1");
  const FittedModel model = load_model(o.model_path);
  const data::CsvTable table = data::read_csv_table(o.input_path, o.delimiter);
  const Index id_col = id_column(table, o.id_column, o.input_path);

  std::vector<Index> feature_cols;
  if (!model.feature_names.empty()) {
    for (const auto& f : model.feature_names) feature_cols.push_back(require_column(table, f, o.input_path));
  } else {
    for (Index c = 0; c < static_cast<Index>(table.header.size()); ++c)
      if (c != id_col) feature_cols.push_back(c);
  }
  if (static_cast<Index>(feature_cols.size()) != model.input_dims())
    throw SchemaMismatch("model expects " + std::to_string(model.input_dims()) + " features, " + o.input_path +
                         " provides " + std::to_string(feature_cols.size()));

  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  Index rejected = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<double> vals;
    bool ok = true;
    for (Index c : feature_cols) {
      const auto v = data::parse_number(table.rows[r][static_cast<std::size_t>(c)]);
      if (!v || !std::isfinite(*v)) {
        ok = false;
        break;
      }
      vals.push_back(*v);
    }
    if (!ok) {
      ++rejected;
      continue;
    }
    ids.push_back(id_col >= 0 ? table.rows[r][static_cast<std::size_t>(id_col)] : std::to_string(r));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw EmptyAfterFiltering("no usable rows in " + o.input_path);
  if (rejected > 0) log(LogLevel::info, "rejected " + std::to_string(rejected) + " rows with missing features");

  MatrixXd x(static_cast<Index>(rows.size()), model.input_dims());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  const GaussianPrediction p = model.predict(x, o.samples, o.seed);
  std::ofstream out = open_output(o.output_path);
  out << "row_id,mean,variance,stddev\n";
  for (Index i = 0; i < p.size(); ++i)
    out << csv_field(ids[static_cast<std::size_t>(i)]) << ',' << num(p.mean(i)) << ',' << num(p.variance(i)) << ','
        << num(std::sqrt(p.variance(i))) << '\n';
  log(LogLevel::info, "wrote " + std::to_string(p.size()) + " predictions to " + o.output_path);
}

// --------------------------------------------------------------- evaluate

void cmd_evaluate(const EvaluateOptions& o) {
  const data::CsvTable preds = data::read_csv_table(o.predictions_path, o.delimiter);
  const data::CsvTable truth = data::read_csv_table(o.truth_path, o.delimiter);
  const Index p_id = require_column(preds, "row_id", o.predictions_path);
  const Index p_mean = require_column(preds, "mean", o.predictions_path);
  const Index p_var = require_column(preds, "variance", o.predictions_path);
  const Index t_y = require_column(truth, o.target, o.truth_path);
  const Index t_id = id_column(truth, o.id_column, o.truth_path);
  const Index t_label = o.label_column.empty() ? -1 : require_column(truth, o.label_column, o.truth_path);

  std::map<std::string, std::size_t> truth_row;
  for (std::size_t r = 0; r < truth.rows.size(); ++r) {
    const std::string id = t_id >= 0 ? truth.rows[r][static_cast<std::size_t>(t_id)] : std::to_string(r);
    if (!truth_row.emplace(id, r).second) throw SchemaMismatch("duplicate row id '" + id + "' in " + o.truth_path);
  }

  const Index n = static_cast<Index>(preds.rows.size());
  if (n == 0) throw EmptyInput(o.predictions_path + " has no rows");
  if (static_cast<std::size_t>(n) != truth.rows.size())
    throw SchemaMismatch(o.predictions_path + " has " + std::to_string(n) + " rows, " + o.truth_path + " has " +
                         std::to_string(truth.rows.size()));
  GaussianPrediction p{VectorXd(n), VectorXd(n)};
  VectorXd y(n);
  std::vector<std::string> labels;
  std::set<std::string> seen;
  for (Index i = 0; i < n; ++i) {
    const auto& row = preds.rows[static_cast<std::size_t>(i)];
    const std::string& id = row[static_cast<std::size_t>(p_id)];
    const auto it = truth_row.find(id);
    if (it == truth_row.end()) throw SchemaMismatch("row id '" + id + "' has no truth in " + o.truth_path);
    if (!seen.insert(id).second) throw SchemaMismatch("duplicate row id '" + id + "' in " + o.predictions_path);
    const auto& trow = truth.rows[it->second];
    p.mean(i) = cell_number(row[static_cast<std::size_t>(p_mean)], "mean of row " + id);
    p.variance(i) = cell_number(row[static_cast<std::size_t>(p_var)], "variance of row " + id);
    y(i) = cell_number(trow[static_cast<std::size_t>(t_y)], o.target + " of row " + id);
    if (t_label >= 0) labels.push_back(trow[static_cast<std::size_t>(t_label)]);
  }

  const double rmse = eval::rmse(p.mean, y);
  const auto mae = eval::mae_with_se(p.mean, y);
  std::vector<eval::PartitionRow> table;
  if (t_label >= 0) {
    table = eval::partitioned_mae(p.mean, y, labels);
  } else {
    table.push_back({"Total", mae.mae, mae.se, mae.n});
  }
  const auto calib = eval::calibration(eval::scaled_residuals(p, y));

  nlohmann::json metrics = {{"n", n},
                            {"rmse", rmse},
                            {"mae", mae.mae},
                            {"mae_se", mae.se},
                            {"partitions", eval::to_json(table)},
                            {"calibration", eval::to_json(calib)}};
  open_output(o.metrics_path) << metrics.dump(1) << '\n';

  std::ofstream csv = open_output(o.table_path);
  csv << "label,mae,se,n\n";
  for (const auto& r : table) csv << csv_field(r.label) << ',' << num(r.mae) << ',' << num(r.se) << ',' << r.n << '\n';

  if (!o.kde_path.empty()) {
    std::ofstream kde = open_output(o.kde_path);
    kde << "grid,density,reference\n";
    for (Index i = 0; i < calib.kde.grid.size(); ++i)
      kde << num(calib.kde.grid(i)) << ',' << num(calib.kde.density(i)) << ',' << num(calib.reference(i)) << '\n';
  }
  log(LogLevel::info, "rmse " + num(rmse) + ", mae " + num(mae.mae) + ", zeta sd " + num(calib.sd_zeta));
}

// -------------------------------------------------------------- benchmark

void cmd_benchmark(const std::string& spec_path) {
  const BenchmarkRunConfig cfg = load_benchmark_config(spec_path);
  log(LogLevel::info, "benchmark: " + std::to_string(cfg.specs.size()) + " specs x " +
                          std::to_string(cfg.models.size()) + " models x " + std::to_string(cfg.repetitions) +
                          " repetitions");
  const auto res = synth::run_benchmark(cfg.specs, cfg.models, cfg.repetitions, cfg.timing);

  std::ofstream out = open_output(cfg.output_path);
  out << "spec_id,model_id,rep,rmse,mae,zeta_mean,zeta_sd,wall_ms\n";
  for (const auto& r : res.rows)
    out << csv_field(r.spec_id) << ',' << csv_field(r.model_id) << ',' << r.rep << ',' << num(r.rmse) << ','
        << num(r.mae) << ',' << num(r.zeta_mean) << ',' << num(r.zeta_sd) << ','
        << (r.wall_ms ? num(*r.wall_ms) : "") << '\n';

  std::ofstream sum = open_output(cfg.summary_path);
  sum << "spec_id,model_id,reps,rmse,rmse_se,mae,mae_se,zeta_mean,zeta_sd\n";
  for (const auto& s : res.summary) {
    sum << csv_field(s.spec_id) << ',' << csv_field(s.model_id) << ',' << s.reps << ',' << num(s.rmse) << ','
        << num(s.rmse_se) << ',' << num(s.mae) << ',' << num(s.mae_se) << ',' << num(s.zeta_mean) << ','
        << num(s.zeta_sd) << '\n';
    log(LogLevel::info, s.spec_id + " / " + s.model_id + ": rmse " + num(s.rmse) + " +- " + num(s.rmse_se));
  }
}

// -------------------------------------------------------------- gradcheck

namespace {

struct GradProblem {
  opt::Objective objective;
  VectorXd point;
  opt::ParamLayout layout;
};

MatrixXd lower_factor(Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.1);
  std::uniform_real_distribution<double> diag(0.3, 0.6);
  MatrixXd l = MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < i; ++j) l(i, j) = normal(rng);
    l(i, i) = diag(rng);
  }
  return l;
}

}  // namespace

bool cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const ModelFamily family = parse_family(o.family);
  if (o.n < 1 || o.dims < 1) throw ConfigError("gradcheck needs n >= 1 and dims >= 1");
  if (family != ModelFamily::exact && (o.m < 1 || o.m > o.n)) throw ConfigError("gradcheck needs 1 <= m <= n");
  if (family == ModelFamily::dgp && (o.layers < 1 || o.width < 1)) throw ConfigError("gradcheck needs layers, width >= 1");
  if (!(o.step > 0.0)) throw ConfigError("gradcheck step must be positive");

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::normal_distribution<double> normal;
  data::Dataset d;
  d.x.resize(o.n, o.dims);
  d.y.resize(o.n);
  for (Index i = 0; i < o.n; ++i) {
    for (Index j = 0; j < o.dims; ++j) d.x(i, j) = u(rng);
    d.y(i) = std::sin(d.x.row(i).sum()) + 0.1 * normal(rng);
  }
  const KernelParams kernel = o.ard ? KernelParams::ard(1.2, VectorXd::LinSpaced(o.dims, 0.6, 1.1))
                                    : KernelParams::isotropic(1.2, 0.7);

  GradProblem prob;
  bool deep = false;
  switch (family) {
    case ModelFamily::exact: {
      const ExactGp gp(kernel, std::log(0.05), d.x, d.y);
      prob.point = gp.hyperparameters();
      prob.layout.add_dense("kernel", 1, kernel.num_params());
      prob.layout.add_dense("log_noise", 1, 1);
      prob.objective = [gp](const VectorXd& t, VectorXd* grad) {
        ExactGp probe = gp;
        probe.set_hyperparameters(t);
        const ObjectiveValue v = probe.nll();
        if (grad) *grad = v.gradient;
        return v.value;
      };
      break;
    }
    case ModelFamily::fitc: {
      MatrixXd z = d.x.topRows(o.m);
      for (Index i = 0; i < z.size(); ++i) z.data()[i] += 0.1 * normal(rng);
      const FitcGp gp(kernel, std::log(0.05), z, d.x, d.y);
      prob.point = gp.parameters();
      prob.layout = gp.layout();
      prob.objective = [gp](const VectorXd& t, VectorXd* grad) {
        FitcGp probe = gp;
        probe.set_parameters(t);
        const ObjectiveValue v = probe.nll();
        if (grad) *grad = v.gradient;
        return v.value;
      };
      break;
    }
    case ModelFamily::svgp:
    case ModelFamily::dgp: {
      deep = true;
      DgpArchitecture arch;
      arch.layers = family == ModelFamily::svgp ? 1 : o.layers;
      arch.hidden_width = o.width;
      arch.inducing = o.m;
      arch.ard = o.ard;
      DgpModel model = dgp_init(d, arch, o.seed);
      for (auto& layer : model.layers) {
        for (Index i = 0; i < layer.q_mu.size(); ++i) layer.q_mu.data()[i] = 0.5 * normal(rng);
        for (auto& f : layer.q_sqrt) f = lower_factor(layer.num_inducing(), rng);
      }
      model.log_noise = std::log(0.1);
      prob.point = model.parameters();
      prob.layout = model.layout();
      const std::uint64_t seed = o.seed;
      prob.objective = [model, d, seed](const VectorXd& t, VectorXd* grad) {
        DgpModel probe = model;
        probe.set_parameters(t);
        const ElboResult r = elbo(probe, d, d.size(), 2, seed, grad != nullptr);
        if (grad) *grad = -r.gradient;
        return -r.value;
      };
      break;
    }
  }

  const double tol = o.tolerance.value_or(deep ? 1e-3 : 1e-4);
  const auto report = opt::check_gradients(prob.objective, prob.point, o.step, tol, &prob.layout);

  out << "family " << o.family << ": " << report.coordinates.size() << " coordinates, max relative error "
      << num(report.max_rel_error) << " (tolerance " << num(tol) << ") " << (report.passed() ? "PASS" : "FAIL")
      << '\n';
  for (Index f : report.failing) {
    const auto& c = report.coordinates[static_cast<std::size_t>(f)];
    out << "  " << c.group << "[" << c.index << "]: analytic " << num(c.analytic) << ", numeric " << num(c.numeric)
        << ", rel " << num(c.rel_error) << '\n';
  }

  if (!o.report_path.empty()) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& c : report.coordinates)
      coords.push_back({{"index", c.index}, {"group", c.group}, {"analytic", c.analytic},
                        {"numeric", c.numeric}, {"rel_error", c.rel_error}});
    const nlohmann::json doc = {{"family", o.family}, {"seed", o.seed}, {"tolerance", tol},
                                {"max_rel_error", report.max_rel_error}, {"passed", report.passed()},
                                {"coordinates", coords}};
    open_output(o.report_path) << doc.dump(1) << '\n';
  }
  return report.passed();
}

}  // namespace deepgp::cli
