#include "hovefl_cli/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hovefl/error.hpp"
#include "hovefl_cli/config.hpp"
#include "hovefl_cli/experiment.hpp"

namespace hovefl::cli {
namespace {

void configure_logging() {
  auto logger = spdlog::get("hovefl");
  if (!logger) logger = spdlog::stderr_color_st("hovefl");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv(kLogLevelEnv);
  spdlog::level::level_enum level = spdlog::level::info;
  if (env && *env) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; keep the default instead.
    if (level == spdlog::level::off && std::string(env) != "off") {
      std::fprintf(stderr, "warning: unknown %s '%s', using info\n", kLogLevelEnv, env);
      level = spdlog::level::info;
    }
  }
  spdlog::set_level(level);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> rounds;
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.rounds) cfg.train.rounds = *o.rounds;
}

bool is_config_problem(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInfeasiblePartition:
    case ErrorCode::kParse:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kCoverage:
      return true;
    default:
      return false;
  }
}

// Runs `body`, mapping failures to exit statuses.
template <typename Body>
int guarded(const std::string& source, Body body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    if (e.line() > 0) {
      std::fprintf(stderr, "error: %s:%zu:%zu: %s\n", source.c_str(), e.line(), e.column(),
                   e.what());
    } else {
      std::fprintf(stderr, "error: %s: %s\n", source.c_str(), e.what());
    }
    return kExitInvalidConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: diverged at round %zu: %s\n", e.round(), e.what());
    return kExitDivergence;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", source.c_str(), e.what());
    return is_config_problem(e.code()) ? kExitInvalidConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}

int do_run(const std::string& path, const Overrides& o) {
  return guarded(path, [&] {
    ExperimentConfig cfg = load_experiment_config(path);
    apply(o, cfg);
    const RunOutcome outcome = run_experiment(cfg);
    publish_directory(cfg.output_dir, [&](const std::filesystem::path& dir) {
      write_run_outputs(outcome, dir);
    });
    const auto& h = outcome.history;
    const RoundRecord& last = h.rounds.empty() ? h.initial : h.rounds.back();
    std::printf("%zu rounds, final train_loss %s test_loss %s -> %s\n", h.rounds.size(),
                format_float(last.train_loss).c_str(), format_float(last.test_loss).c_str(),
                cfg.output_dir.c_str());
  });
}

int do_compare(const std::string& path, const Overrides& o) {
  return guarded(path, [&] {
    ComparisonSpec spec = load_comparison_spec(path);
    if (o.seed) spec.seeds = {*o.seed};
    if (o.out) spec.output_dir = *o.out;
    if (o.rounds) spec.base.train.rounds = *o.rounds;
    const ComparisonOutcome outcome = run_comparison(spec);
    publish_directory(spec.output_dir, [&](const std::filesystem::path& dir) {
      write_comparison_outputs(outcome, dir);
    });
    for (const auto& line : comparison_lines(outcome)) std::printf("%s\n", line.c_str());
  });
}

int do_plot(const std::string& dir) {
  return guarded(dir, [&] { emit_plot_data(dir); });
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  configure_logging();
  CLI::App app{"Hybrid horizontal/vertical federated learning simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;
  std::string spec_path;
  std::string plot_dir;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { o.seed = v; },
                                            "Override the seed (compare: single seed)");
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { o.out = v; },
                                          "Override the output directory");
    sub->add_option_function<std::size_t>("--rounds", [&](std::size_t v) { o.rounds = v; },
                                          "Override train.rounds");
  };
  CLI::App* run = app.add_subcommand("run", "Train one configuration and analyze it");
  run->add_option("config", config_path, "Experiment config (YAML or JSON)")->required();
  add_overrides(run);
  CLI::App* compare = app.add_subcommand("compare", "Paired-seed comparison of topologies");
  compare->add_option("spec", spec_path, "Comparison spec (YAML or JSON)")->required();
  add_overrides(compare);
  CLI::App* plot = app.add_subcommand("plot", "Write .dat curves from a run directory");
  plot->add_option("dir", plot_dir, "Run output directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidConfig;
  }

  if (*run) return do_run(config_path, o);
  if (*compare) return do_compare(spec_path, o);
  return do_plot(plot_dir);
}

}  // namespace hovefl::cli
