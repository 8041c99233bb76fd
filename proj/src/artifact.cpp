#include "deepgp/artifact.hpp"

#include <fstream>

#include "deepgp/errors.hpp"

namespace deepgp {

using nlohmann::json;

namespace {

json encode(const MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json encode(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

MatrixXd decode_matrix(const json& j) {
  const Index rows = field(j, "rows").get<Index>();
  const Index cols = field(j, "cols").get<Index>();
  const auto& data = field(j, "data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw FormatError("matrix data length does not match its shape");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)].get<double>();
  return m;
}

VectorXd decode_vector(const json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

json encode(const KernelParams& k) {
  return {{"log_variance", k.log_variance}, {"log_lengthscales", encode(k.log_lengthscales)}};
}

KernelParams decode_kernel(const json& j) {
  KernelParams k;
  k.log_variance = field(j, "log_variance").get<double>();
  k.log_lengthscales = decode_vector(field(j, "log_lengthscales"));
  if (k.log_lengthscales.size() < 1) throw FormatError("kernel has no lengthscale");
  return k;
}

json encode(const linalg::CholFactor& c) { return {{"lower", encode(c.lower)}, {"jitter", c.jitter}}; }

linalg::CholFactor decode_chol(const json& j) {
  linalg::CholFactor c;
  c.lower = decode_matrix(field(j, "lower"));
  c.jitter = field(j, "jitter").get<double>();
  if (c.lower.rows() != c.lower.cols()) throw FormatError("Cholesky factor is not square");
  return c;
}

template <class T>
json opt_value(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> read_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json encode(const ModelConfig& c) {
  return {{"layers", opt_value(c.layers)},
          {"hidden_width", c.hidden_width},
          {"inducing", opt_value(c.inducing)},
          {"ard", c.ard},
          {"pca_components", c.pca_components},
          {"subsample", c.subsample},
          {"initial_noise", c.initial_noise},
          {"max_steps", opt_value(c.max_steps)},
          {"learning_rate", opt_value(c.learning_rate)},
          {"batch_size", opt_value(c.batch_size)},
          {"mc_samples", opt_value(c.mc_samples)},
          {"tolerance", opt_value(c.tolerance)}};
}

ModelConfig decode_config(const json& j, ModelFamily family) {
  ModelConfig c;
  c.family = family;
  c.layers = read_opt<Index>(j, "layers");
  c.hidden_width = field(j, "hidden_width").get<Index>();
  c.inducing = read_opt<Index>(j, "inducing");
  c.ard = field(j, "ard").get<bool>();
  c.pca_components = field(j, "pca_components").get<Index>();
  c.subsample = field(j, "subsample").get<Index>();
  c.initial_noise = field(j, "initial_noise").get<double>();
  c.max_steps = read_opt<int>(j, "max_steps");
  c.learning_rate = read_opt<double>(j, "learning_rate");
  c.batch_size = read_opt<Index>(j, "batch_size");
  c.mc_samples = read_opt<int>(j, "mc_samples");
  c.tolerance = read_opt<double>(j, "tolerance");
  return c;
}

json encode(const data::StandardizeTransform& t) {
  return {{"mean", encode(t.features.mean)},
          {"scale", encode(t.features.scale)},
          {"constant", t.features.constant},
          {"target_mean", t.target_mean},
          {"target_scale", t.target_scale},
          {"target_constant", t.target_constant}};
}

data::StandardizeTransform decode_standardize(const json& j) {
  data::StandardizeTransform t;
  t.features.mean = decode_vector(field(j, "mean"));
  t.features.scale = decode_vector(field(j, "scale"));
  t.features.constant = field(j, "constant").get<std::vector<bool>>();
  if (t.features.scale.size() != t.features.mean.size() ||
      static_cast<Index>(t.features.constant.size()) != t.features.mean.size())
    throw FormatError("standardize transform arrays disagree in length");
  t.target_mean = field(j, "target_mean").get<double>();
  t.target_scale = field(j, "target_scale").get<double>();
  t.target_constant = field(j, "target_constant").get<bool>();
  return t;
}

json encode(const data::PcaTransform& p) {
  return {{"mean", encode(p.mean)},
          {"basis", encode(p.basis)},
          {"variances", encode(p.variances)},
          {"all_variances", encode(p.all_variances)}};
}

data::PcaTransform decode_pca(const json& j) {
  data::PcaTransform p;
  p.mean = decode_vector(field(j, "mean"));
  p.basis = decode_matrix(field(j, "basis"));
  p.variances = decode_vector(field(j, "variances"));
  p.all_variances = decode_vector(field(j, "all_variances"));
  if (p.basis.rows() != p.mean.size()) throw FormatError("PCA basis does not match its mean");
  return p;
}

json encode_dgp(const DgpModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    json q_sqrt = json::array();
    for (const auto& f : l.q_sqrt) q_sqrt.push_back(encode(f));
    layers.push_back({{"kernel", encode(l.kernel)},
                      {"inducing", encode(l.inducing)},
                      {"q_mu", encode(l.q_mu)},
                      {"q_sqrt", q_sqrt},
                      {"mean_weights", encode(l.mean_weights)}});
  }
  return {{"log_noise", m.log_noise}, {"layers", layers}};
}

DgpModel decode_dgp(const json& j) {
  DgpModel m;
  m.log_noise = field(j, "log_noise").get<double>();
  for (const auto& lj : field(j, "layers")) {
    DgpLayer l;
    l.kernel = decode_kernel(field(lj, "kernel"));
    l.inducing = decode_matrix(field(lj, "inducing"));
    l.q_mu = decode_matrix(field(lj, "q_mu"));
    for (const auto& f : field(lj, "q_sqrt")) l.q_sqrt.push_back(decode_matrix(f));
    l.mean_weights = decode_matrix(field(lj, "mean_weights"));
    m.layers.push_back(std::move(l));
  }
  if (m.layers.empty()) throw FormatError("deep GP has no layers");
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent deep GP parameters: ") + e.what());
  }
  return m;
}

}  // namespace

json model_to_json(const FittedModel& fm) {
  json params;
  if (const auto* gp = std::get_if<ExactGp>(&fm.model)) {
    params = {{"kernel", encode(gp->kernel())},
              {"log_noise", gp->log_noise()},
              {"x", encode(gp->inputs())},
              {"y", encode(gp->targets())}};
  } else if (const auto* p = std::get_if<FitcPosterior>(&fm.model)) {
    params = {{"kernel", encode(p->kernel)},
              {"log_noise", p->log_noise},
              {"inducing", encode(p->inducing)},
              {"kuu_chol", encode(p->kuu_chol)},
              {"a_chol", encode(p->a_chol)},
              {"v_alpha", encode(p->v_alpha)}};
  } else if (const auto* d = std::get_if<DgpModel>(&fm.model)) {
    params = encode_dgp(*d);
  } else {
    throw ConfigError("cannot save an unfitted model");
  }
  json doc = {{"format_version", kModelFormatVersion},
              {"family", to_string(fm.config.family)},
              {"config", encode(fm.config)},
              {"schema", {{"features", fm.feature_names}, {"target", fm.target_name}}},
              {"transforms",
               {{"standardize", encode(fm.standardize)},
                {"pca", fm.pca ? encode(*fm.pca) : json(nullptr)}}},
              {"training",
               {{"seed", fm.meta.seed},
                {"steps", fm.meta.steps},
                {"final_objective", fm.meta.final_objective},
                {"n_train", fm.meta.n_train}}},
              {"parameters", params}};
  return doc;
}

FittedModel model_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("format_version") || !doc.at("format_version").is_number_integer())
    throw FormatError("not a model file: integer format_version is missing");
  const int version = doc.at("format_version").get<int>();
  if (version > kModelFormatVersion)
    throw FormatError("model file format version " + std::to_string(version) +
                      " is newer than the supported version " + std::to_string(kModelFormatVersion));
  if (version < 1) throw FormatError("invalid format version " + std::to_string(version));

  try {
    FittedModel fm;
    const ModelFamily family = parse_family(field(doc, "family").get<std::string>());
    fm.config = decode_config(field(doc, "config"), family);
    const auto& schema = field(doc, "schema");
    fm.feature_names = field(schema, "features").get<std::vector<std::string>>();
    fm.target_name = field(schema, "target").get<std::string>();
    const auto& tr = field(doc, "transforms");
    fm.standardize = decode_standardize(field(tr, "standardize"));
    if (tr.contains("pca") && !tr.at("pca").is_null()) fm.pca = decode_pca(tr.at("pca"));
    const auto& meta = field(doc, "training");
    fm.meta.seed = field(meta, "seed").get<std::uint64_t>();
    fm.meta.steps = field(meta, "steps").get<int>();
    fm.meta.final_objective = field(meta, "final_objective").get<double>();
    fm.meta.n_train = field(meta, "n_train").get<Index>();

    const auto& p = field(doc, "parameters");
    switch (family) {
      case ModelFamily::exact:
        fm.model = ExactGp(decode_kernel(field(p, "kernel")), field(p, "log_noise").get<double>(),
                           decode_matrix(field(p, "x")), decode_vector(field(p, "y")));
        break;
      case ModelFamily::fitc: {
        FitcPosterior post;
        post.kernel = decode_kernel(field(p, "kernel"));
        post.log_noise = field(p, "log_noise").get<double>();
        post.inducing = decode_matrix(field(p, "inducing"));
        post.kuu_chol = decode_chol(field(p, "kuu_chol"));
        post.a_chol = decode_chol(field(p, "a_chol"));
        post.v_alpha = decode_vector(field(p, "v_alpha"));
        const Index m = post.inducing.rows();
        if (post.kuu_chol.order() != m || post.a_chol.order() != m || post.v_alpha.size() != m)
          throw FormatError("FITC arrays disagree with the inducing count");
        fm.model = std::move(post);
        break;
      }
      case ModelFamily::svgp:
      case ModelFamily::dgp:
        fm.model = decode_dgp(p);
        break;
    }
    if (fm.pca && fm.pca->basis.rows() != fm.input_dims())
      throw FormatError("PCA input width differs from the feature count");
    return fm;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
}

void save_model(const FittedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write model file '" + path + "'");
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw FormatError("failed writing model file '" + path + "'");
}

FittedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace deepgp
