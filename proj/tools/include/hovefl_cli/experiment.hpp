#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hovefl/analysis.hpp"
#include "hovefl/federation.hpp"
#include "hovefl/topology.hpp"
#include "hovefl_cli/config.hpp"

namespace hovefl::cli {

struct PreparedData {
  Dataset train;
  Dataset test;
  ModelLayout layout;
};

// Generates or loads the dataset and splits it, all from cfg.seed.
PreparedData prepare_data(const ExperimentConfig& cfg);

struct RunOutcome {
  // cfg with mu resolved when mu_times_l was given.
  ExperimentConfig effective;
  Topology topology;
  RunHistory history;
  // Absent when analysis is disabled.
  std::optional<ConvergenceEstimates> estimates;
  std::optional<BoundCurve> bound;
  nlohmann::ordered_json analysis;
};

// Throws DivergenceError when training blows up.
RunOutcome run_experiment(const ExperimentConfig& cfg);

// Writes history.csv, analysis.json, config_echo.json, shards.json and,
// when analysis ran, bound.csv into `dir` (which must exist).
void write_run_outputs(const RunOutcome& outcome, const std::filesystem::path& dir);

// Runs `writer` against a fresh sibling temp directory, then renames it to
// `target`, replacing any previous contents. Nothing is left behind when
// `writer` throws.
void publish_directory(const std::filesystem::path& target,
                       const std::function<void(const std::filesystem::path&)>& writer);

struct ArmResult {
  std::string label;
  TopologySpec topology;
  std::vector<double> final_test_loss;   // one per seed, seed order
  std::vector<double> final_train_loss;
  std::vector<RunHistory> histories;
};

struct ComparisonOutcome {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmResult> arms;
};

ComparisonOutcome run_comparison(const ComparisonSpec& spec);

// summary.csv, per_seed.csv, curve_<label>.csv, comparison.json.
void write_comparison_outputs(const ComparisonOutcome& outcome,
                              const std::filesystem::path& dir);

// One line per non-reference arm, e.g.
// "test loss of H12V6 is 5.5% higher than H6V12 (...)".
std::vector<std::string> comparison_lines(const ComparisonOutcome& outcome);

// Writes train_loss.dat, test_loss.dat and, when bound.csv exists,
// bound.dat into `dir`. Values are copied verbatim from the CSVs.
void emit_plot_data(const std::filesystem::path& dir);

// %.12e, with "nan" / "inf" for non-finite values.
std::string format_float(double value);

}  // namespace hovefl::cli
