#include "hovefl_cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include <spdlog/spdlog.h>

namespace hovefl::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

ordered_json topology_summary(const Topology& topo) {
  ordered_json devices = ordered_json::array();
  for (const auto& s : topo.shards) {
    devices.push_back({{"device_id", s.device_id},
                       {"role", ToString(s.role)},
                       {"samples", s.sample_count()},
                       {"features", s.feature_indices.size()}});
  }
  return {{"n_horizontal", topo.n_horizontal},
          {"n_vertical", topo.n_vertical},
          {"horizontal_pool", topo.horizontal_pool.size()},
          {"vertical_pool", topo.vertical_pool.size()},
          {"global_dim", topo.global_dim()},
          {"devices", devices}};
}

ordered_json round_json(const RoundRecord& r) {
  ordered_json j = {{"round", r.round},
                    {"train_loss", number_or_null(r.train_loss)},
                    {"test_loss", number_or_null(r.test_loss)},
                    {"objective", number_or_null(r.objective)},
                    {"grad_norm", number_or_null(r.grad_norm)},
                    {"sigma_hat", number_or_null(r.sigma_hat)}};
  if (r.train_accuracy) j["train_accuracy"] = *r.train_accuracy;
  if (r.test_accuracy) j["test_accuracy"] = *r.test_accuracy;
  return j;
}

ordered_json curve_json(const BoundCurve& c) {
  ordered_json values = ordered_json::array();
  for (double v : c.values) values.push_back(number_or_null(v));
  return {{"requested_form", ToString(c.requested)},
          {"form", ToString(c.form)},
          {"factor", c.factor},
          {"mu_above_inverse_l", c.mu_above_inverse_l},
          {"values", values}};
}

struct Smoothness {
  double l_hat = 0.0;
  Provenance provenance = Provenance::kEmpirical;
  double raw_ratio = 0.0;
};

Smoothness estimate_smoothness(const ExperimentConfig& cfg, const Objective& objective,
                               const ModelParams& init) {
  ProbeOptions probes;
  probes.probe_count = cfg.analysis.probe_count;
  probes.radius = cfg.analysis.probe_radius;
  probes.center = init.theta;
  RngStream rng(cfg.seed, make_stream_id(StreamPurpose::kProbes, 0));
  const LipschitzEstimate est = estimate_lipschitz(objective, probes, rng);
  return {est.value, est.provenance, est.max_ratio};
}

ordered_json analyze(const ExperimentConfig& cfg, const PreparedData& data,
                     const RunHistory& history, const Smoothness& smooth,
                     const Objective& objective, RunOutcome& outcome) {
  ConvergenceEstimates est;
  est.l_hat = smooth.l_hat;
  est.l_provenance = smooth.provenance;
  ordered_json notes = ordered_json::array();

  if (data.layout.kind == ModelKind::kRidgeLinear) {
    est.f_star = ridge_closed_form(data.train, cfg.train.alpha).f_star;
    est.f_star_provenance = Provenance::kAnalytic;
  } else {
    double best = history.initial.objective;
    for (const auto& r : history.rounds) best = std::min(best, r.objective);
    const double ref = reference_optimum(objective, history.final_params.theta,
                                         1.0 / est.l_hat, cfg.analysis.reference_steps);
    est.f_star = std::min(ref, best - 1e-9);
    est.f_star_provenance = Provenance::kEmpirical;
  }

  ProbeOptions probes;
  probes.probe_count = cfg.analysis.probe_count;
  probes.radius = cfg.analysis.probe_radius;
  probes.center = history.final_params.theta;
  RngStream rng(cfg.seed, make_stream_id(StreamPurpose::kProbes, 1));
  try {
    const PlEstimate pl = estimate_pl(objective, est.f_star, probes, rng);
    est.rho_hat = pl.value;
    est.rho_provenance = pl.provenance;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEstimationFailed) throw;
    notes.push_back(std::string("rho_hat unavailable: ") + e.what());
  }
  if (est.rho_hat > est.l_hat) {
    notes.push_back("rho_hat clamped to l_hat");
    est.rho_hat = est.l_hat;
  }
  est.sigma_hat = max_sigma(history);
  est.theta_hat = std::max(0.0, history.initial.objective - est.f_star);
  est.validate();

  const double mu = cfg.train.mu;
  const std::size_t steps = history.rounds.size();
  ordered_json bounds = ordered_json::object();
  for (BoundForm form : {BoundForm::kGeometricSum, BoundForm::kClosedForm}) {
    try {
      BoundCurve curve = bound_curve(est, mu, steps, form);
      bounds[ToString(form)] = curve_json(curve);
      if (form == cfg.analysis.bound_form) outcome.bound = std::move(curve);
    } catch (const Error& e) {
      bounds[ToString(form)] = {{"error", e.what()}};
    }
  }

  ordered_json dominance = nullptr;
  if (outcome.bound) {
    const DominanceReport rep = bound_vs_run(history, *outcome.bound, est.f_star);
    ordered_json rounds = ordered_json::array();
    for (const auto& r : rep.rows) {
      if (r.violated) rounds.push_back(r.round);
    }
    dominance = {{"form", ToString(outcome.bound->form)},
                 {"violations", rep.violations},
                 {"min_margin", number_or_null(rep.min_margin)},
                 {"violated_rounds", rounds}};
  }

  const ConvexityReport cor = check_bound_convexity(est, mu, steps, cfg.analysis.bound_form);
  ordered_json convexity = {{"form", ToString(cor.form)},
                            {"mu_within_limit", cor.mu_within_limit},
                            {"theta_threshold", number_or_null(cor.theta_threshold)},
                            {"theta_meets_threshold", cor.theta_meets_threshold},
                            {"convex", cor.convex ? ordered_json(*cor.convex) : ordered_json(nullptr)},
                            {"min_second_difference", number_or_null(cor.min_second_difference)}};

  const DescentAudit audit = audit_descent(history, est, mu);
  ordered_json audit_rows = ordered_json::array();
  for (const auto& r : audit.rows) {
    audit_rows.push_back({{"round", r.round},
                          {"objective_before", r.objective_before},
                          {"objective_after", number_or_null(r.objective_after)},
                          {"rhs", number_or_null(r.rhs)},
                          {"violated", r.violated}});
  }

  ordered_json j = {
      {"enabled", true},
      {"mu", mu},
      {"estimates",
       {{"l_hat", est.l_hat},
        {"l_provenance", ToString(est.l_provenance)},
        {"l_raw_secant_max", smooth.raw_ratio},
        {"rho_hat", est.rho_hat},
        {"rho_provenance", ToString(est.rho_provenance)},
        {"sigma_hat", est.sigma_hat},
        {"sigma_provenance", ToString(est.sigma_provenance)},
        {"theta_hat", est.theta_hat},
        {"f_star", est.f_star},
        {"f_star_provenance", ToString(est.f_star_provenance)}}},
      {"bound_form", ToString(cfg.analysis.bound_form)},
      {"bounds", bounds},
      {"dominance", dominance},
      {"convexity", convexity},
      {"descent_audit", {{"violations", audit.violations}, {"rows", audit_rows}}},
      {"notes", notes},
  };
  outcome.estimates = est;
  return j;
}

}  // namespace

std::string format_float(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", value);
  return buf;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  Dataset full;
  if (d.source == "csv") {
    CsvSchema schema;
    schema.feature_columns = d.feature_columns;
    schema.label_column = d.label_column;
    schema.task = d.task;
    schema.id_column = d.id_column;
    full = load_csv(d.csv_path, schema);
  } else if (d.task == TaskKind::kRegression) {
    full = generate_regression(d.n_samples, d.n_features, d.noise_std, cfg.seed);
  } else {
    full = generate_classification(d.n_samples, d.n_features, d.n_classes, d.cluster_sep,
                                   cfg.seed);
  }
  TrainTestSplit split = split_train_test(full, d.test_fraction, cfg.seed);
  PreparedData out{std::move(split.train), std::move(split.test), {}};
  out.layout = make_layout(cfg.model.kind, full.task, full.n_features(), full.n_classes,
                           cfg.model.hidden_width);
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome outcome;
  outcome.effective = cfg;
  ExperimentConfig& eff = outcome.effective;
  eff.train.track_diagnostics = true;

  const PreparedData data = prepare_data(cfg);
  spdlog::info("dataset: {} train rows, {} test rows, {} features, model dim {}",
               data.train.n_samples(), data.test.n_samples(), data.train.n_features(),
               data.layout.dim());
  outcome.topology = build_topology(data.train, cfg.topology, data.layout, cfg.seed);
  outcome.topology.validate(data.train);

  const Objective objective = global_objective(data.train, data.layout, cfg.train.alpha);
  std::optional<Smoothness> smooth;
  if (cfg.analysis.enabled || cfg.mu_times_l) {
    smooth = estimate_smoothness(cfg, objective, initial_params(data.layout, eff.train, cfg.seed));
    spdlog::info("L_hat = {:.6g} ({})", smooth->l_hat, ToString(smooth->provenance));
  }
  if (cfg.mu_times_l) {
    eff.train.mu = *cfg.mu_times_l / smooth->l_hat;
    spdlog::info("mu = {:.6g} / L_hat = {:.6g}", *cfg.mu_times_l, eff.train.mu);
  }
  eff.train.validate();

  outcome.history = run_federation(data.train, data.test, outcome.topology, eff.train, eff.seed,
                                   DivergencePolicy::kThrow);
  for (const auto& r : outcome.history.rounds) {
    spdlog::debug("round {}: train {:.6g} test {:.6g} |g| {:.3g} sigma {:.3g}", r.round,
                  r.train_loss, r.test_loss, r.grad_norm, r.sigma_hat);
  }

  ordered_json final_metrics = round_json(
      outcome.history.rounds.empty() ? outcome.history.initial : outcome.history.rounds.back());
  ordered_json analysis =
      cfg.analysis.enabled
          ? analyze(eff, data, outcome.history, *smooth, objective, outcome)
          : ordered_json{{"enabled", false}, {"mu", eff.train.mu}};
  outcome.analysis = {{"seed", eff.seed},
                      {"rounds", outcome.history.rounds.size()},
                      {"initial", round_json(outcome.history.initial)},
                      {"final", final_metrics},
                      {"topology", topology_summary(outcome.topology)},
                      {"analysis", analysis}};
  return outcome;
}

void write_run_outputs(const RunOutcome& outcome, const fs::path& dir) {
  std::string csv = "round,train_loss,test_loss,grad_norm,sigma_hat\n";
  for (const auto& r : outcome.history.rounds) {
    csv += std::to_string(r.round) + "," + format_float(r.train_loss) + "," +
           format_float(r.test_loss) + "," + format_float(r.grad_norm) + "," +
           format_float(r.sigma_hat) + "\n";
  }
  write_text(dir / "history.csv", csv);
  write_text(dir / "analysis.json", outcome.analysis.dump(2) + "\n");
  write_text(dir / "config_echo.json", config_to_json(outcome.effective).dump(2) + "\n");
  write_text(dir / "shards.json", topology_to_json(outcome.topology) + "\n");

  if (outcome.bound && outcome.estimates) {
    std::string b = "t,bound,empirical_gap\n";
    const auto& h = outcome.history;
    for (std::size_t t = 0; t < outcome.bound->values.size(); ++t) {
      const double obj = t == 0 ? h.initial.objective : h.rounds[t - 1].objective;
      b += std::to_string(t) + "," + format_float(outcome.bound->values[t]) + "," +
           format_float(obj - outcome.estimates->f_star) + "\n";
    }
    write_text(dir / "bound.csv", b);
  }
}

void publish_directory(const fs::path& target,
                       const std::function<void(const fs::path&)>& writer) {
  const fs::path abs = fs::absolute(target).lexically_normal();
  const fs::path parent = abs.parent_path();
  fs::create_directories(parent);
  const fs::path tmp =
      parent / ("." + abs.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directory(tmp);
  try {
    writer(tmp);
    fs::remove_all(abs);
    fs::rename(tmp, abs);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

ComparisonOutcome run_comparison(const ComparisonSpec& spec) {
  ComparisonOutcome out;
  out.seeds = spec.seeds;
  for (const auto& arm : spec.arms) {
    ArmResult res;
    res.label = arm.label;
    res.topology = arm.topology;
    for (std::uint64_t seed : spec.seeds) {
      ExperimentConfig cfg = spec.base;
      cfg.seed = seed;
      cfg.topology = arm.topology;
      cfg.analysis.enabled = false;
      spdlog::info("arm {} seed {}", arm.label, seed);
      RunOutcome run;
      try {
        run = run_experiment(cfg);
      } catch (const DivergenceError& e) {
        throw DivergenceError("arm " + arm.label + ", seed " + std::to_string(seed) + ": " +
                                  e.what(),
                              e.round(), e.device_id(), e.iteration());
      }
      const RoundRecord& last =
          run.history.rounds.empty() ? run.history.initial : run.history.rounds.back();
      res.final_test_loss.push_back(last.test_loss);
      res.final_train_loss.push_back(last.train_loss);
      res.histories.push_back(std::move(run.history));
    }
    out.arms.push_back(std::move(res));
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void write_comparison_outputs(const ComparisonOutcome& outcome, const fs::path& dir) {
  std::string summary =
      "arm,n_horizontal,n_vertical,n_seeds,mean_final_test_loss,sd_final_test_loss,"
      "mean_final_train_loss,sd_final_train_loss\n";
  ordered_json arms = ordered_json::array();
  for (const auto& arm : outcome.arms) {
    const auto sd_test = sd_of(arm.final_test_loss);
    const auto sd_train = sd_of(arm.final_train_loss);
    summary += arm.label + "," + std::to_string(arm.topology.n_horizontal) + "," +
               std::to_string(arm.topology.n_vertical) + "," +
               std::to_string(arm.final_test_loss.size()) + "," +
               format_float(mean_of(arm.final_test_loss)) + "," +
               (sd_test ? format_float(*sd_test) : "NA") + "," +
               format_float(mean_of(arm.final_train_loss)) + "," +
               (sd_train ? format_float(*sd_train) : "NA") + "\n";
    arms.push_back({{"label", arm.label},
                    {"n_horizontal", arm.topology.n_horizontal},
                    {"n_vertical", arm.topology.n_vertical},
                    {"final_test_loss", arm.final_test_loss},
                    {"mean_final_test_loss", mean_of(arm.final_test_loss)},
                    {"sd_final_test_loss", sd_test ? ordered_json(*sd_test) : ordered_json(nullptr)}});

    std::string curve = "round,seed,train_loss,test_loss\n";
    for (std::size_t s = 0; s < arm.histories.size(); ++s) {
      for (const auto& r : arm.histories[s].rounds) {
        curve += std::to_string(r.round) + "," + std::to_string(outcome.seeds[s]) + "," +
                 format_float(r.train_loss) + "," + format_float(r.test_loss) + "\n";
      }
    }
    write_text(dir / ("curve_" + arm.label + ".csv"), curve);
  }
  write_text(dir / "summary.csv", summary);

  std::string per_seed = "seed";
  for (const auto& arm : outcome.arms) per_seed += "," + arm.label;
  per_seed += "\n";
  for (std::size_t s = 0; s < outcome.seeds.size(); ++s) {
    per_seed += std::to_string(outcome.seeds[s]);
    for (const auto& arm : outcome.arms) per_seed += "," + format_float(arm.final_test_loss[s]);
    per_seed += "\n";
  }
  write_text(dir / "per_seed.csv", per_seed);

  const ordered_json j = {
      {"seeds", outcome.seeds}, {"arms", arms}, {"lines", comparison_lines(outcome)}};
  write_text(dir / "comparison.json", j.dump(2) + "\n");
}

std::vector<std::string> comparison_lines(const ComparisonOutcome& outcome) {
  std::vector<std::string> lines;
  if (outcome.arms.empty()) return lines;
  const ArmResult& ref = outcome.arms.front();
  const double ref_mean = mean_of(ref.final_test_loss);
  for (std::size_t a = 1; a < outcome.arms.size(); ++a) {
    const ArmResult& arm = outcome.arms[a];
    const double rel = 100.0 * (mean_of(arm.final_test_loss) - ref_mean) / ref_mean;
    std::size_t lower = 0;
    for (std::size_t s = 0; s < arm.final_test_loss.size(); ++s) {
      if (arm.final_test_loss[s] <= ref.final_test_loss[s]) ++lower;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "test loss of %s is %.1f%% %s than %s (%zu paired seeds, %s <= %s in %zu/%zu)",
                  arm.label.c_str(), std::fabs(rel), rel >= 0 ? "higher" : "lower",
                  ref.label.c_str(), arm.final_test_loss.size(), arm.label.c_str(),
                  ref.label.c_str(), lower, arm.final_test_loss.size());
    lines.emplace_back(buf);
  }
  return lines;
}

void emit_plot_data(const fs::path& dir) {
  const fs::path history = dir / "history.csv";
  if (!fs::exists(history)) {
    throw Error(ErrorCode::kIo, "no history.csv in '" + dir.string() + "'");
  }
  auto split_row = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  auto columns_of = [&](const fs::path& path, const std::vector<std::string>& wanted) {
    std::stringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, path.string() + ": empty file");
    const auto header = split_row(line);
    std::vector<std::size_t> idx;
    for (const auto& w : wanted) {
      const auto it = std::find(header.begin(), header.end(), w);
      if (it == header.end()) {
        throw Error(ErrorCode::kParse, path.string() + ": missing column '" + w + "'");
      }
      idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto cells = split_row(line);
      std::vector<std::string> row;
      for (std::size_t i : idx) {
        if (i >= cells.size()) {
          throw Error(ErrorCode::kParse,
                      path.string() + ":" + std::to_string(line_no) + ": too few columns");
        }
        row.push_back(cells[i]);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto write_dat = [&](const fs::path& path, const std::vector<std::vector<std::string>>& rows) {
    std::string text;
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) text += (i ? " " : "") + row[i];
      text += "\n";
    }
    write_text(path, text);
  };

  write_dat(dir / "train_loss.dat", columns_of(history, {"round", "train_loss"}));
  write_dat(dir / "test_loss.dat", columns_of(history, {"round", "test_loss"}));
  const fs::path bound = dir / "bound.csv";
  if (fs::exists(bound)) {
    write_dat(dir / "bound.dat", columns_of(bound, {"t", "bound", "empirical_gap"}));
  }
}

}  // namespace hovefl::cli
