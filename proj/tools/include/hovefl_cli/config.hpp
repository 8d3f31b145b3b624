#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hovefl/analysis.hpp"
#include "hovefl/data.hpp"
#include "hovefl/error.hpp"
#include "hovefl/federation.hpp"
#include "hovefl/models.hpp"
#include "hovefl/topology.hpp"

namespace hovefl::cli {

// Config problem tied to a location in the source file. line/column are
// 1-based; 0 means the location is unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, std::size_t line, std::size_t column)
      : Error(ErrorCode::kParse, message), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct DatasetConfig {
  // "generator" or "csv".
  std::string source = "generator";
  TaskKind task = TaskKind::kRegression;
  std::size_t n_samples = 500;
  std::size_t n_features = 8;
  std::size_t n_classes = 3;
  double noise_std = 0.5;
  double cluster_sep = 2.0;
  std::string csv_path;
  std::string label_column = "label";
  std::vector<std::string> feature_columns;
  std::optional<std::string> id_column;
  double test_fraction = 0.2;
};

struct ModelConfig {
  ModelKind kind = ModelKind::kRidgeLinear;
  std::size_t hidden_width = 16;
};

struct AnalysisConfig {
  bool enabled = true;
  BoundForm bound_form = BoundForm::kGeometricSum;
  std::size_t probe_count = 200;
  double probe_radius = 1.0;
  std::size_t reference_steps = 2000;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DatasetConfig dataset;
  TopologySpec topology;
  ModelConfig model;
  TrainConfig train;
  // When set, the step size is mu_times_l / L_hat and train.mu is ignored.
  std::optional<double> mu_times_l;
  AnalysisConfig analysis;
};

struct ArmSpec {
  std::string label;
  TopologySpec topology;
};

struct ComparisonSpec {
  ExperimentConfig base;
  std::vector<ArmSpec> arms;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "compare_out";
};

// Defaults used for keys a config leaves out.
ExperimentConfig default_experiment_config();

// Both loaders reject unknown keys and out-of-range values with a
// ConfigError carrying the offending line. Relative csv paths resolve
// against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
ComparisonSpec load_comparison_spec(const std::filesystem::path& path);
ComparisonSpec parse_comparison_spec(const std::string& text,
                                     const std::filesystem::path& base_dir = {});

// Every field, defaults included. The result is itself a loadable config.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

}  // namespace hovefl::cli
