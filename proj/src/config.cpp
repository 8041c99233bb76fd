#include "deepgp/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "deepgp/errors.hpp"

namespace deepgp::cli {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// One INI section with key tracking, so unknown keys can be reported.
class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> str(const std::string& key) {
    used_.insert(key);
    const auto it = tree_.find(key);
    if (it == tree_.not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  template <class T>
  std::optional<T> number(const std::string& key) {
    const auto s = str(key);
    if (!s) return std::nullopt;
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        v = static_cast<T>(std::stod(*s, &used));
        if (used != s->size()) throw std::invalid_argument(*s);
      } catch (const std::exception&) {
        throw ConfigError(where(key) + " expects a number, got '" + *s + "'");
      }
    } else {
      const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
      if (ec != std::errc() || ptr != s->data() + s->size())
        throw ConfigError(where(key) + " expects an integer, got '" + *s + "'");
    }
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto s = str(key);
    if (!s) return std::nullopt;
    std::string l = *s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
    if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
    if (l == "false" || l == "0" || l == "no" || l == "off") return false;
    throw ConfigError(where(key) + " expects true or false, got '" + *s + "'");
  }

  void reject_unknown() const {
    for (const auto& [key, value] : tree_)
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
  }

  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

pt::ptree read_ini(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("cannot parse '") + path + "': " + e.what());
  }
  for (const auto& [key, value] : tree)
    if (value.empty() && !value.data().empty())
      throw ConfigError("key '" + key + "' in '" + path + "' is outside any section");
  return tree;
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

char parse_delimiter(const std::string& s, const std::string& where) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s.size() == 1) return s[0];
  throw ConfigError(where + " must be a single character or 'tab'");
}

// [model] keys; `train` may be the same section (benchmark models) or [train].
void read_model_keys(Section& s, ModelConfig& m) {
  const auto family = s.str("family");
  if (!family) throw ConfigError(s.where("family") + " is required");
  m.family = parse_family(*family);
  m.layers = s.number<Index>("layers");
  if (auto v = s.number<Index>("hidden_width")) m.hidden_width = *v;
  m.inducing = s.number<Index>("inducing");
  if (auto v = s.boolean("ard")) m.ard = *v;
  if (auto v = s.number<Index>("pca")) m.pca_components = *v;
  if (auto v = s.number<Index>("subsample")) m.subsample = *v;
  if (auto v = s.number<double>("initial_noise")) m.initial_noise = *v;
}

void read_train_keys(Section& s, ModelConfig& m) {
  m.max_steps = s.number<int>("max_steps");
  m.learning_rate = s.number<double>("learning_rate");
  m.batch_size = s.number<Index>("batch_size");
  m.mc_samples = s.number<int>("mc_samples");
  m.tolerance = s.number<double>("tolerance");
}

}  // namespace

TrainRunConfig load_train_config(const std::string& path) {
  const pt::ptree tree = read_ini(path);
  const std::string base = fs::path(path).parent_path().string();
  const std::set<std::string> known = {"data", "model", "train", "output"};
  for (const auto& [key, value] : tree)
    if (!known.count(key)) throw ConfigError("unknown section [" + key + "] in '" + path + "'");
  auto section = [&](const std::string& name) -> const pt::ptree& {
    static const pt::ptree empty;
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  TrainRunConfig c;
  Section data("data", section("data"));
  const auto data_path = data.str("path");
  if (!data_path) throw ConfigError("[data] path is required");
  c.data_path = resolve(base, *data_path);
  const auto target = data.str("target");
  if (!target || target->empty()) throw ConfigError("[data] target is required");
  c.schema.target = *target;
  if (auto v = data.str("features")) c.schema.features = split_list(*v);
  if (auto v = data.str("label")) c.schema.label = *v;
  if (auto v = data.str("row_id")) c.schema.row_id = *v;
  if (auto v = data.str("delimiter")) c.schema.delimiter = parse_delimiter(*v, "[data] delimiter");
  data.reject_unknown();

  Section model("model", section("model"));
  read_model_keys(model, c.model);
  model.reject_unknown();

  Section train("train", section("train"));
  if (auto v = train.number<std::uint64_t>("seed")) c.seed = *v;
  read_train_keys(train, c.model);
  train.reject_unknown();

  Section out("output", section("output"));
  if (auto v = out.str("model")) c.model_path = *v;
  if (auto v = out.str("trace")) c.trace_path = *v;
  if (auto v = out.boolean("timing")) c.timing = *v;
  out.reject_unknown();
  c.model_path = resolve(base, c.model_path);
  c.trace_path = resolve(base, c.trace_path);

  c.model.validate();
  return c;
}

BenchmarkRunConfig load_benchmark_config(const std::string& path) {
  const pt::ptree tree = read_ini(path);
  const std::string base = fs::path(path).parent_path().string();
  BenchmarkRunConfig c;
  for (const auto& [key, value] : tree) {
    if (key == "benchmark") {
      Section s("benchmark", value);
      if (auto v = s.number<int>("repetitions")) c.repetitions = *v;
      if (auto v = s.str("output")) c.output_path = *v;
      if (auto v = s.str("summary")) c.summary_path = *v;
      if (auto v = s.boolean("timing")) c.timing = *v;
      s.reject_unknown();
    } else if (key.rfind("spec.", 0) == 0 && key.size() > 5) {
      Section s(key, value);
      synth::BenchmarkSpec spec;
      spec.id = key.substr(5);
      const auto kind = s.str("kind");
      if (!kind) throw ConfigError(s.where("kind") + " is required");
      spec.kind = synth::parse_kind(*kind);
      if (auto v = s.number<Index>("dimensions")) spec.dimensions = *v;
      if (auto v = s.number<double>("noise")) spec.noise_sd = *v;
      if (auto v = s.number<Index>("n_test")) spec.n_test = *v;
      if (auto v = s.number<std::uint64_t>("seed")) spec.seed = *v;
      if (auto v = s.number<double>("variance")) spec.variance = *v;
      if (auto v = s.number<double>("lengthscale")) spec.lengthscale = *v;
      spec.input_low = s.number<double>("input_low");
      spec.input_high = s.number<double>("input_high");
      if (auto v = s.number<Index>("input_levels")) spec.input_levels = *v;
      std::vector<std::string> sizes;
      if (auto v = s.str("n_train")) sizes = split_list(*v);
      s.reject_unknown();
      if (sizes.empty()) sizes.push_back(std::to_string(spec.n_train));
      for (const auto& size : sizes) {
        synth::BenchmarkSpec sized = spec;
        const auto [ptr, ec] = std::from_chars(size.data(), size.data() + size.size(), sized.n_train);
        if (ec != std::errc() || ptr != size.data() + size.size())
          throw ConfigError(s.where("n_train") + " has a non-integer size '" + size + "'");
        if (sizes.size() > 1) sized.id = spec.id + "_n" + size;
        sized.validate();
        c.specs.push_back(sized);
      }
    } else if (key.rfind("model.", 0) == 0 && key.size() > 6) {
      Section s(key, value);
      synth::BenchmarkModel m;
      m.id = key.substr(6);
      read_model_keys(s, m.config);
      read_train_keys(s, m.config);
      if (auto v = s.number<int>("samples")) m.predict_samples = *v;
      s.reject_unknown();
      m.config.validate();
      if (m.predict_samples < 1) throw ConfigError(s.where("samples") + " must be >= 1");
      c.models.push_back(m);
    } else {
      throw ConfigError("unknown section [" + key + "] in '" + path + "'");
    }
  }
  if (c.specs.empty()) throw ConfigError("'" + path + "' declares no [spec.<id>] section");
  if (c.models.empty()) throw ConfigError("'" + path + "' declares no [model.<id>] section");
  if (c.repetitions < 1) throw ConfigError("[benchmark] repetitions must be >= 1");
  c.output_path = resolve(base, c.output_path);
  c.summary_path = resolve(base, c.summary_path);
  return c;
}

}  // namespace deepgp::cli
