#include "hovefl_cli/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace hovefl::cli {
namespace {

[[noreturn]] void fail_at(const YAML::Mark& mark, const std::string& message) {
  if (mark.is_null()) throw ConfigError(message, 0, 0);
  throw ConfigError(message, static_cast<std::size_t>(mark.line) + 1,
                    static_cast<std::size_t>(mark.column) + 1);
}

// Walks one mapping, remembering which keys were read so leftovers can be
// rejected as unknown.
class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      fail_at(node_.Mark(), (path_.empty() ? "config" : path_) + ": expected a mapping");
    }
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Undefined node when the key is absent.
  YAML::Node take(const std::string& key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (it->first.Scalar() == key) return it->second;
    }
    return YAML::Node(YAML::NodeType::Undefined);
  }

  YAML::Mark mark() const { return node_ ? node_.Mark() : YAML::Mark::null_mark(); }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const std::string key = it->first.Scalar();
      if (!seen_.count(key)) fail_at(it->first.Mark(), key_path(key) + ": unknown key");
    }
  }

  void number(const std::string& key, double& out, const std::function<bool(double)>& ok,
              const char* requirement) {
    const YAML::Node n = take(key);
    if (!n.IsDefined()) return;
    out = parse_double(n, key);
    if (!ok(out)) fail_at(n.Mark(), key_path(key) + ": must be " + requirement);
  }

  void optional_number(const std::string& key, std::optional<double>& out,
                       const std::function<bool(double)>& ok, const char* requirement) {
    const YAML::Node n = take(key);
    if (!n.IsDefined() || n.IsNull()) return;
    const double v = parse_double(n, key);
    if (!ok(v)) fail_at(n.Mark(), key_path(key) + ": must be " + requirement);
    out = v;
  }

  template <typename Int>
  void integer(const std::string& key, Int& out, std::uint64_t minimum) {
    const YAML::Node n = take(key);
    if (!n.IsDefined()) return;
    const std::uint64_t v = parse_unsigned(n, key);
    if (v < minimum) {
      fail_at(n.Mark(), key_path(key) + ": must be >= " + std::to_string(minimum));
    }
    out = static_cast<Int>(v);
  }

  void boolean(const std::string& key, bool& out) {
    const YAML::Node n = take(key);
    if (!n.IsDefined()) return;
    const std::string s = scalar(n, key);
    if (s == "true") {
      out = true;
    } else if (s == "false") {
      out = false;
    } else {
      fail_at(n.Mark(), key_path(key) + ": expected true or false, got '" + s + "'");
    }
  }

  void string(const std::string& key, std::string& out) {
    const YAML::Node n = take(key);
    if (n.IsDefined()) out = scalar(n, key);
  }

  // Parses an enumerated string with `parse`, reporting failures at the
  // value's line.
  template <typename T, typename Parse>
  void choice(const std::string& key, T& out, Parse parse) {
    const YAML::Node n = take(key);
    if (!n.IsDefined()) return;
    const std::string s = scalar(n, key);
    try {
      out = parse(s);
    } catch (const Error&) {
      fail_at(n.Mark(), key_path(key) + ": unsupported value '" + s + "'");
    }
  }

  std::string scalar(const YAML::Node& n, const std::string& key) const {
    if (!n.IsScalar()) fail_at(n.Mark(), key_path(key) + ": expected a scalar");
    return n.Scalar();
  }

  double parse_double(const YAML::Node& n, const std::string& key) const {
    const std::string s = scalar(n, key);
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
      fail_at(n.Mark(), key_path(key) + ": expected a finite number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t parse_unsigned(const YAML::Node& n, const std::string& key) const {
    const std::string s = scalar(n, key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
      fail_at(n.Mark(), key_path(key) + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorCode::kInvalidArgument, s);
}

WeightScheme parse_weight_scheme(const std::string& s) {
  if (s == "sample_proportional") return WeightScheme::kSampleProportional;
  if (s == "uniform") return WeightScheme::kUniform;
  throw Error(ErrorCode::kInvalidArgument, s);
}

InitKind parse_init(const std::string& s) {
  if (s == "zero") return InitKind::kZero;
  if (s == "gaussian") return InitKind::kGaussian;
  throw Error(ErrorCode::kInvalidArgument, s);
}

std::string parse_source(const std::string& s) {
  if (s != "generator" && s != "csv") throw Error(ErrorCode::kInvalidArgument, s);
  return s;
}

auto positive = [](double v) { return v > 0.0; };
auto non_negative = [](double v) { return v >= 0.0; };
auto unit_closed = [](double v) { return v >= 0.0 && v <= 1.0; };
auto unit_half_open = [](double v) { return v >= 0.0 && v < 1.0; };
auto unit_open = [](double v) { return v > 0.0 && v < 1.0; };

YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail_at(e.mark, "syntax error: " + e.msg);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_topology(MapReader& r, TopologySpec& t) {
  r.integer("n_horizontal", t.n_horizontal, 0);
  r.integer("n_vertical", t.n_vertical, 0);
  r.number("dirichlet_beta", t.horizontal.dirichlet_beta, positive, "> 0");
  r.integer("min_per_device", t.horizontal.min_per_device, 0);
  r.number("overlap_fraction", t.vertical.overlap_fraction, unit_closed, "in [0, 1]");
  r.number("pool_ratio", t.pool_ratio, unit_open, "in (0, 1)");
}

void check_topology(const TopologySpec& t, const YAML::Mark& mark, const std::string& path) {
  if (t.n_horizontal + t.n_vertical == 0) {
    fail_at(mark, path + ": needs at least one device (n_horizontal + n_vertical >= 1)");
  }
}

ExperimentConfig parse_experiment_node(const YAML::Node& root,
                                       const std::filesystem::path& base_dir) {
  ExperimentConfig cfg = default_experiment_config();
  MapReader top(root, "");
  top.integer("seed", cfg.seed, 0);
  top.string("output_dir", cfg.output_dir);

  const YAML::Node dataset_node = top.take("dataset");
  MapReader ds(dataset_node, "dataset");
  DatasetConfig& d = cfg.dataset;
  ds.choice("source", d.source, parse_source);
  ds.choice("task", d.task, ParseTaskKind);
  ds.integer("n_samples", d.n_samples, 2);
  ds.integer("n_features", d.n_features, 1);
  const YAML::Node classes_node = ds.take("n_classes");
  if (classes_node.IsDefined()) d.n_classes = ds.parse_unsigned(classes_node, "n_classes");
  ds.number("noise_std", d.noise_std, non_negative, ">= 0");
  ds.number("cluster_sep", d.cluster_sep, non_negative, ">= 0");
  const YAML::Node csv_node = ds.take("csv_path");
  if (csv_node.IsDefined() && !csv_node.IsNull()) d.csv_path = ds.scalar(csv_node, "csv_path");
  ds.string("label_column", d.label_column);
  const YAML::Node cols = ds.take("feature_columns");
  if (cols.IsDefined() && !cols.IsNull()) {
    if (!cols.IsSequence()) fail_at(cols.Mark(), "dataset.feature_columns: expected a list");
    for (const auto& c : cols) d.feature_columns.push_back(ds.scalar(c, "feature_columns"));
  }
  const YAML::Node id_node = ds.take("id_column");
  if (id_node.IsDefined() && !id_node.IsNull()) d.id_column = ds.scalar(id_node, "id_column");
  ds.number("test_fraction", d.test_fraction, unit_half_open, "in [0, 1)");
  ds.finish();

  if (d.task == TaskKind::kBinaryClassification) {
    if (classes_node.IsDefined() && d.n_classes != 2) {
      fail_at(classes_node.Mark(), "dataset.n_classes: must be 2 for binary_classification");
    }
    d.n_classes = 2;
  } else if (d.task == TaskKind::kMulticlass && d.n_classes < 2) {
    fail_at(classes_node.IsDefined() ? classes_node.Mark() : ds.mark(),
            "dataset.n_classes: must be >= 2");
  }
  if (d.source == "csv") {
    if (d.csv_path.empty()) fail_at(ds.mark(), "dataset.csv_path: required when source is csv");
    const std::filesystem::path p(d.csv_path);
    if (p.is_relative() && !base_dir.empty()) d.csv_path = (base_dir / p).lexically_normal().string();
  }

  const YAML::Node topo_node = top.take("topology");
  MapReader tr(topo_node, "topology");
  read_topology(tr, cfg.topology);
  tr.finish();

  const YAML::Node model_node = top.take("model");
  MapReader mr(model_node, "model");
  mr.choice("kind", cfg.model.kind, ParseModelKind);
  mr.integer("hidden_width", cfg.model.hidden_width, 1);
  mr.finish();

  MapReader t(top.take("train"), "train");
  TrainConfig& tc = cfg.train;
  t.number("mu", tc.mu, positive, "> 0");
  t.optional_number("mu_times_l", cfg.mu_times_l, positive, "> 0");
  t.integer("t_local", tc.t_local, 1);
  t.integer("rounds", tc.rounds, 0);
  t.number("alpha", tc.alpha, unit_closed, "in [0, 1]");
  t.choice("optimizer", tc.optimizer.kind, parse_optimizer);
  t.number("beta1", tc.optimizer.beta1, unit_half_open, "in [0, 1)");
  t.number("beta2", tc.optimizer.beta2, unit_half_open, "in [0, 1)");
  t.number("epsilon", tc.optimizer.epsilon, positive, "> 0");
  t.integer("batch_size", tc.batch_size, 0);
  t.choice("weight_scheme", tc.weight_scheme, parse_weight_scheme);
  t.choice("init", tc.init, parse_init);
  t.number("init_scale", tc.init_scale, non_negative, ">= 0");
  t.integer("threads", tc.threads, 1);
  t.boolean("record_grad_trace", tc.record_grad_trace);
  t.finish();

  MapReader a(top.take("analysis"), "analysis");
  a.boolean("enabled", cfg.analysis.enabled);
  a.choice("bound_form", cfg.analysis.bound_form, ParseBoundForm);
  a.integer("probe_count", cfg.analysis.probe_count, 2);
  a.number("probe_radius", cfg.analysis.probe_radius, positive, "> 0");
  a.integer("reference_steps", cfg.analysis.reference_steps, 1);
  a.finish();

  top.finish();

  check_topology(cfg.topology, topo_node ? topo_node.Mark() : top.mark(), "topology");
  const bool ridge = cfg.model.kind == ModelKind::kRidgeLinear;
  if (ridge != (d.task == TaskKind::kRegression)) {
    const YAML::Node kind_node = model_node && model_node.IsMap() ? model_node["kind"] : YAML::Node();
    fail_at(kind_node && kind_node.IsDefined() ? kind_node.Mark() : mr.mark(),
            std::string("model.kind: '") + ToString(cfg.model.kind) +
                "' does not fit task '" + ToString(d.task) + "'");
  }
  return cfg;
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.topology.n_horizontal = 4;
  cfg.topology.n_vertical = 2;
  cfg.train.rounds = 50;
  cfg.train.track_diagnostics = true;
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir) {
  return parse_experiment_node(load_yaml(text), base_dir);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path), path.parent_path());
}

ComparisonSpec parse_comparison_spec(const std::string& text,
                                     const std::filesystem::path& base_dir) {
  const YAML::Node root = load_yaml(text);
  MapReader top(root, "");
  ComparisonSpec spec;
  top.string("output_dir", spec.output_dir);

  const YAML::Node base = top.take("base");
  const YAML::Node base_path = top.take("base_config");
  if (base.IsDefined() == base_path.IsDefined()) {
    fail_at(top.mark(), "exactly one of 'base' or 'base_config' is required");
  }
  if (base.IsDefined()) {
    spec.base = parse_experiment_node(base, base_dir);
  } else {
    std::filesystem::path p(top.scalar(base_path, "base_config"));
    if (p.is_relative()) p = base_dir / p;
    try {
      spec.base = load_experiment_config(p);
    } catch (const ConfigError& e) {
      throw ConfigError(p.string() + ": " + e.what(), e.line(), e.column());
    }
  }

  const YAML::Node seeds = top.take("seeds");
  if (seeds.IsDefined()) {
    if (!seeds.IsSequence() || seeds.size() == 0) {
      fail_at(seeds.Mark(), "seeds: expected a non-empty list");
    }
    for (const auto& s : seeds) spec.seeds.push_back(top.parse_unsigned(s, "seeds"));
  } else {
    spec.seeds.push_back(spec.base.seed);
  }

  const YAML::Node arms = top.take("arms");
  if (!arms.IsDefined() || !arms.IsSequence() || arms.size() < 2) {
    fail_at(arms.IsDefined() ? arms.Mark() : top.mark(), "arms: expected a list of at least 2 arms");
  }
  std::set<std::string> labels;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string path = "arms[" + std::to_string(i) + "]";
    MapReader ar(arms[i], path);
    ArmSpec arm;
    arm.topology = spec.base.topology;
    ar.string("label", arm.label);
    if (arm.label.empty()) fail_at(arms[i].Mark(), path + ".label: required");
    for (char c : arm.label) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
        fail_at(arms[i].Mark(), path + ".label: only letters, digits, '_' and '-' allowed");
      }
    }
    if (!labels.insert(arm.label).second) {
      fail_at(arms[i].Mark(), path + ".label: duplicate label '" + arm.label + "'");
    }
    const YAML::Node topo = ar.take("topology");
    MapReader tr(topo, path + ".topology");
    read_topology(tr, arm.topology);
    tr.finish();
    check_topology(arm.topology, arms[i].Mark(), path + ".topology");
    ar.finish();
    spec.arms.push_back(std::move(arm));
  }
  top.finish();
  return spec;
}

ComparisonSpec load_comparison_spec(const std::filesystem::path& path) {
  return parse_comparison_spec(read_file(path), path.parent_path());
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  using nlohmann::ordered_json;
  const DatasetConfig& d = cfg.dataset;
  ordered_json dataset = {
      {"source", d.source},
      {"task", ToString(d.task)},
      {"n_samples", d.n_samples},
      {"n_features", d.n_features},
      {"n_classes", d.n_classes},
      {"noise_std", d.noise_std},
      {"cluster_sep", d.cluster_sep},
      {"csv_path", d.csv_path.empty() ? ordered_json(nullptr) : ordered_json(d.csv_path)},
      {"label_column", d.label_column},
      {"feature_columns", d.feature_columns},
      {"id_column", d.id_column ? ordered_json(*d.id_column) : ordered_json(nullptr)},
      {"test_fraction", d.test_fraction},
  };
  const TopologySpec& t = cfg.topology;
  ordered_json topology = {
      {"n_horizontal", t.n_horizontal},
      {"n_vertical", t.n_vertical},
      {"dirichlet_beta", t.horizontal.dirichlet_beta},
      {"min_per_device", t.horizontal.min_per_device},
      {"overlap_fraction", t.vertical.overlap_fraction},
      {"pool_ratio", t.pool_ratio},
  };
  const TrainConfig& tc = cfg.train;
  ordered_json train = {
      {"mu", tc.mu},
      {"mu_times_l", cfg.mu_times_l ? ordered_json(*cfg.mu_times_l) : ordered_json(nullptr)},
      {"t_local", tc.t_local},
      {"rounds", tc.rounds},
      {"alpha", tc.alpha},
      {"optimizer", ToString(tc.optimizer.kind)},
      {"beta1", tc.optimizer.beta1},
      {"beta2", tc.optimizer.beta2},
      {"epsilon", tc.optimizer.epsilon},
      {"batch_size", tc.batch_size},
      {"weight_scheme", ToString(tc.weight_scheme)},
      {"init", ToString(tc.init)},
      {"init_scale", tc.init_scale},
      {"threads", tc.threads},
      {"record_grad_trace", tc.record_grad_trace},
  };
  ordered_json analysis = {
      {"enabled", cfg.analysis.enabled},
      {"bound_form", ToString(cfg.analysis.bound_form)},
      {"probe_count", cfg.analysis.probe_count},
      {"probe_radius", cfg.analysis.probe_radius},
      {"reference_steps", cfg.analysis.reference_steps},
  };
  return ordered_json{
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"dataset", dataset},
      {"topology", topology},
      {"model", {{"kind", ToString(cfg.model.kind)}, {"hidden_width", cfg.model.hidden_width}}},
      {"train", train},
      {"analysis", analysis},
  };
}

}  // namespace hovefl::cli
