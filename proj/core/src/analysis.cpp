#include "hovefl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "hovefl/error.hpp"

namespace hovefl {

const char* ToString(Provenance p) {
  return p == Provenance::kAnalytic ? "analytic" : "empirical";
}

const char* ToString(BoundForm form) {
  return form == BoundForm::kClosedForm ? "closed_form" : "geometric_sum";
}

BoundForm ParseBoundForm(const std::string& name) {
  if (name == "closed_form") return BoundForm::kClosedForm;
  if (name == "geometric_sum") return BoundForm::kGeometricSum;
  throw Error(ErrorCode::kInvalidArgument, "unknown bound form '" + name + "'");
}

Objective global_objective(const Dataset& train, const ModelLayout& layout, double alpha) {
  struct Storage {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> features;
    CoordinateMask mask;
  };
  auto storage = std::make_shared<Storage>();
  storage->rows.resize(train.n_samples());
  std::iota(storage->rows.begin(), storage->rows.end(), 0);
  storage->features.resize(train.n_features());
  std::iota(storage->features.begin(), storage->features.end(), 0);
  storage->mask = full_mask(layout);
  const Dataset* ds = &train;

  Objective obj;
  obj.dim = layout.dim();
  obj.value = [storage, ds, layout, alpha](const Vector& theta) {
    const ModelParams p{theta, layout};
    return local_objective(p, {ds, storage->rows, storage->features, storage->mask}, alpha)
        .total;
  };
  obj.gradient = [storage, ds, layout, alpha](const Vector& theta) {
    const ModelParams p{theta, layout};
    return local_gradient(p, {ds, storage->rows, storage->features, storage->mask}, alpha);
  };
  if (layout.kind == ModelKind::kRidgeLinear) obj.hessian = ridge_hessian(train, alpha);
  return obj;
}

namespace {

Vector probe_point(const ProbeOptions& options, std::size_t dim, RngStream& rng) {
  Vector p = options.radius * gaussian(rng, dim);
  if (options.center) axpy(1.0, *options.center, p);
  return p;
}

}  // namespace

double lipschitz_secant_max(const Objective& objective, const std::vector<Vector>& points) {
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); i += 2) {
    const double dx = norm(points[i] - points[i + 1]);
    if (!(dx > 0.0)) continue;
    const double dg = norm(objective.gradient(points[i]) - objective.gradient(points[i + 1]));
    best = std::max(best, dg / dx);
  }
  return best;
}

LipschitzEstimate estimate_lipschitz(const Objective& objective, const ProbeOptions& options,
                                     RngStream& rng) {
  LipschitzEstimate est;
  if (objective.hessian) {
    est.value = symmetric_eigenvalues(*objective.hessian).back();
    est.max_ratio = est.value;
    est.provenance = Provenance::kAnalytic;
    return est;
  }
  if (options.probe_count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "estimate_lipschitz: probe_count must be >= 2");
  }
  std::vector<Vector> points;
  points.reserve(2 * options.probe_count);
  for (std::size_t i = 0; i < 2 * options.probe_count; ++i) {
    points.push_back(probe_point(options, objective.dim, rng));
  }
  est.max_ratio = lipschitz_secant_max(objective, points);
  est.value = kLipschitzSafetyFactor * est.max_ratio;
  est.provenance = Provenance::kEmpirical;
  return est;
}

PlEstimate pl_ratio_min(const Objective& objective, double f_star,
                        const std::vector<Vector>& points) {
  constexpr double kMinGap = 1e-10;
  PlEstimate est;
  est.value = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    const double gap = objective.value(p) - f_star;
    if (!(gap >= kMinGap)) continue;
    const double g2 = squared_norm(objective.gradient(p));
    est.value = std::min(est.value, g2 / (2.0 * gap));
    ++est.used_probes;
  }
  if (est.used_probes == 0) {
    throw Error(ErrorCode::kEstimationFailed,
                "estimate_pl: every probe is within 1e-10 of F*; cannot estimate rho");
  }
  return est;
}

PlEstimate estimate_pl(const Objective& objective, double f_star,
                       const ProbeOptions& options, RngStream& rng) {
  if (objective.hessian) {
    PlEstimate est;
    est.value = symmetric_eigenvalues(*objective.hessian).front();
    est.provenance = Provenance::kAnalytic;
    return est;
  }
  std::vector<Vector> points;
  points.reserve(options.probe_count);
  for (std::size_t i = 0; i < options.probe_count; ++i) {
    points.push_back(probe_point(options, objective.dim, rng));
  }
  return pl_ratio_min(objective, f_star, points);
}

double reference_optimum(const Objective& objective, const Vector& start, double mu,
                         std::size_t steps) {
  Vector theta = start;
  double best = objective.value(theta);
  for (std::size_t s = 0; s < steps; ++s) {
    axpy(-mu, objective.gradient(theta), theta);
    const double v = objective.value(theta);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kDivergence, "reference_optimum: diverged at step " +
                                              std::to_string(s));
    }
    best = std::min(best, v);
  }
  return best - 1e-9;
}

void ConvergenceEstimates::validate() const {
  if (!(l_hat >= 0 && rho_hat >= 0 && sigma_hat >= 0 && theta_hat >= 0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "ConvergenceEstimates: L, rho, sigma and Theta must be >= 0");
  }
  if (rho_hat > l_hat * (1.0 + 1e-12)) {
    throw Error(ErrorCode::kInvalidArgument, "ConvergenceEstimates: rho_hat exceeds L_hat");
  }
}

double max_sigma(const RunHistory& history) {
  double best = history.initial.sigma_hat;
  for (const auto& r : history.rounds) best = std::max(best, r.sigma_hat);
  return best;
}

BoundCurve bound_curve(const ConvergenceEstimates& est, double mu, std::size_t rounds,
                       BoundForm form) {
  if (!(mu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bound_curve: mu must be > 0");
  const double l = est.l_hat;
  const double rho = est.rho_hat;
  const double sigma2 = est.sigma_hat * est.sigma_hat;
  const double theta = est.theta_hat;

  BoundCurve curve;
  curve.requested = form;
  curve.factor = 2.0 * rho * (l * mu * mu - mu) + 1.0;
  curve.mu_above_inverse_l = l * mu > 1.0;
  curve.form = form;
  if (form == BoundForm::kClosedForm && std::abs(l * mu - 1.0) < 1e-9) {
    curve.form = BoundForm::kGeometricSum;
  }
  curve.values.reserve(rounds + 1);

  const double f = curve.factor;
  double f_pow = 1.0;  // f^t
  double partial = 0.0;  // sum_{i=1..t} f^(i-1)
  const double drift = 2.0 * rho * l * mu * mu * sigma2;
  const double closed_coeff = l * mu * sigma2 / (l * mu - 1.0);
  for (std::size_t t = 0; t <= rounds; ++t) {
    double b;
    if (curve.form == BoundForm::kGeometricSum) {
      b = f_pow * theta + drift * partial;
    } else {
      b = f_pow * theta + closed_coeff * (f_pow * f - 1.0);
    }
    if (!std::isfinite(b)) {
      throw Error(ErrorCode::kNonFinite,
                  "bound_curve: overflow at t = " + std::to_string(t));
    }
    curve.values.push_back(b);
    partial += f_pow;
    f_pow *= f;
  }
  return curve;
}

ConvexityReport check_bound_convexity(const ConvergenceEstimates& est, double mu,
                                 std::size_t rounds, BoundForm form) {
  ConvexityReport report;
  const double l = est.l_hat;
  const double rho = est.rho_hat;
  const double sigma2 = est.sigma_hat * est.sigma_hat;
  report.mu_within_limit = l * mu <= 1.0;
  const double f = 1.0 - 2.0 * rho * mu + 2.0 * rho * l * mu * mu;
  if (l * mu < 1.0) {
    report.theta_threshold = f * l * mu * sigma2 / (1.0 - l * mu);
  } else {
    report.theta_threshold = sigma2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  report.theta_meets_threshold = est.theta_hat >= report.theta_threshold;
  if (!report.mu_within_limit) return report;

  const BoundCurve curve = bound_curve(est, mu, rounds, form);
  report.form = curve.form;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t + 1 < curve.values.size(); ++t) {
    const double second = curve.values[t + 1] - 2.0 * curve.values[t] + curve.values[t - 1];
    worst = std::min(worst, second);
  }
  report.min_second_difference = std::isfinite(worst) ? worst : 0.0;
  report.convex = report.min_second_difference >= -kConvexityTolerance;
  return report;
}

namespace {

bool exceeds(double value, double limit) {
  return value > limit + 1e-12 * std::max(1.0, std::abs(limit));
}

}  // namespace

DescentAudit audit_descent(const RunHistory& history, const ConvergenceEstimates& est,
                           double mu) {
  DescentAudit audit;
  const RoundRecord* before = &history.initial;
  for (const auto& after : history.rounds) {
    if (std::isnan(before->grad_norm) || std::isnan(before->sigma_hat)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "audit_descent: round " + std::to_string(before->round) +
                      " lacks gradient diagnostics");
    }
    DescentAuditRow row;
    row.round = after.round;
    row.objective_before = before->objective;
    row.objective_after = after.objective;
    const double g = before->grad_norm;
    const double spread = g + before->sigma_hat;
    row.rhs = before->objective - mu * g * g + 0.5 * est.l_hat * mu * mu * spread * spread;
    row.violated = exceeds(row.objective_after, row.rhs);
    if (row.violated) ++audit.violations;
    audit.rows.push_back(row);
    before = &after;
  }
  return audit;
}

DominanceReport bound_vs_run(const RunHistory& history, const BoundCurve& curve,
                             double f_star) {
  if (curve.values.size() < history.rounds.size() + 1) {
    throw Error(ErrorCode::kInvalidArgument, "bound_vs_run: bound curve shorter than run");
  }
  DominanceReport report;
  report.min_margin = std::numeric_limits<double>::infinity();
  auto check = [&](const RoundRecord& rec) {
    DominanceRow row;
    row.round = rec.round;
    row.gap = rec.objective - f_star;
    row.bound = curve.values[rec.round];
    row.violated = exceeds(row.gap, row.bound);
    if (row.violated) ++report.violations;
    report.min_margin = std::min(report.min_margin, row.bound - row.gap);
    report.rows.push_back(row);
  };
  check(history.initial);
  for (const auto& r : history.rounds) check(r);
  return report;
}

}  // namespace hovefl
