#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hovefl/data.hpp"
#include "hovefl/federation.hpp"
#include "hovefl/models.hpp"
#include "hovefl/numerics.hpp"
#include "hovefl/rng.hpp"

namespace hovefl {

// A differentiable objective on R^dim. `hessian` is set when the objective
// is quadratic and its (constant) Hessian is known in closed form.
struct Objective {
  std::size_t dim = 0;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::optional<Matrix> hessian;
};

// Regularized global objective over every row of `train` with all
// coordinates trainable. Ridge layouts carry their analytic Hessian.
Objective global_objective(const Dataset& train, const ModelLayout& layout, double alpha);

enum class Provenance { kAnalytic, kEmpirical };
const char* ToString(Provenance p);

struct ProbeOptions {
  std::size_t probe_count = 200;
  double radius = 1.0;
  // Probes are drawn as center + radius * N(0, I).
  std::optional<Vector> center;
};

struct LipschitzEstimate {
  double value = 0.0;           // reported L_hat
  double max_ratio = 0.0;       // max ||g(a)-g(b)|| / ||a-b|| before the safety factor
  Provenance provenance = Provenance::kEmpirical;
};

inline constexpr double kLipschitzSafetyFactor = 1.1;

// Random-pair secant estimate scaled by kLipschitzSafetyFactor, or the
// largest Hessian eigenvalue when the Hessian is known.
LipschitzEstimate estimate_lipschitz(const Objective& objective, const ProbeOptions& options,
                                     RngStream& rng);

// Max secant ratio over consecutive pairs (points[0], points[1]),
// (points[2], points[3]), ... without the safety factor.
double lipschitz_secant_max(const Objective& objective, const std::vector<Vector>& points);

struct PlEstimate {
  double value = 0.0;
  std::size_t used_probes = 0;
  Provenance provenance = Provenance::kEmpirical;
};

// min ||grad F(m)||^2 / (2 (F(m) - F*)) over random probes, or the smallest
// Hessian eigenvalue when the Hessian is known.
PlEstimate estimate_pl(const Objective& objective, double f_star,
                       const ProbeOptions& options, RngStream& rng);

// Same ratio over explicit probe points. Probes with F - F* < 1e-10 are
// skipped; throws kEstimationFailed when none remain.
PlEstimate pl_ratio_min(const Objective& objective, double f_star,
                        const std::vector<Vector>& points);

// Best objective seen during `steps` gradient steps from `start`, minus a
// 1e-9 margin. Stand-in for F* when no closed form exists.
double reference_optimum(const Objective& objective, const Vector& start, double mu,
                         std::size_t steps);

struct ConvergenceEstimates {
  double l_hat = 0.0;
  double rho_hat = 0.0;
  double sigma_hat = 0.0;
  double theta_hat = 0.0;
  double f_star = 0.0;
  Provenance l_provenance = Provenance::kEmpirical;
  Provenance rho_provenance = Provenance::kEmpirical;
  Provenance sigma_provenance = Provenance::kEmpirical;
  Provenance f_star_provenance = Provenance::kEmpirical;

  // Throws kInvalidArgument on negative values or rho_hat > l_hat.
  void validate() const;
};

// sigma = max over recorded rounds (including round 0) of sigma_hat_t.
double max_sigma(const RunHistory& history);

enum class BoundForm { kClosedForm, kGeometricSum };
const char* ToString(BoundForm form);
BoundForm ParseBoundForm(const std::string& name);

struct BoundCurve {
  std::vector<double> values;  // B(0) .. B(T)
  double factor = 0.0;         // 2 rho (L mu^2 - mu) + 1
  BoundForm requested = BoundForm::kGeometricSum;
  BoundForm form = BoundForm::kGeometricSum;  // form actually evaluated
  bool mu_above_inverse_l = false;
};

// Closed form:   B(T) = f^T Theta + L mu sigma^2 (f^(T+1) - 1) / (L mu - 1)
// Geometric sum: B(T) = f^T Theta + 2 rho L mu^2 sigma^2 sum_{i=1..T} f^(i-1)
// The closed form falls back to the geometric sum when |L mu - 1| < 1e-9.
BoundCurve bound_curve(const ConvergenceEstimates& est, double mu, std::size_t rounds,
                       BoundForm form);

struct ConvexityReport {
  bool mu_within_limit = false;
  double theta_threshold = 0.0;
  bool theta_meets_threshold = false;
  // Second-difference scan of the bound; absent when mu > 1/L.
  std::optional<bool> convex;
  double min_second_difference = 0.0;
  BoundForm form = BoundForm::kClosedForm;
};

inline constexpr double kConvexityTolerance = 1e-12;

ConvexityReport check_bound_convexity(const ConvergenceEstimates& est, double mu,
                                 std::size_t rounds,
                                 BoundForm form = BoundForm::kClosedForm);

struct DescentAuditRow {
  std::size_t round = 0;       // checks the step m_G(round-1) -> m_G(round)
  double objective_before = 0.0;
  double objective_after = 0.0;
  double rhs = 0.0;
  bool violated = false;
};

struct DescentAudit {
  std::vector<DescentAuditRow> rows;
  std::size_t violations = 0;
};

// F(t+1) <= F(t) - mu ||g_t||^2 + (L mu^2 / 2)(||g_t|| + sigma_t)^2 for each
// recorded step, with a relative slack of 1e-12 for rounding.
DescentAudit audit_descent(const RunHistory& history, const ConvergenceEstimates& est,
                           double mu);

struct DominanceRow {
  std::size_t round = 0;
  double gap = 0.0;    // F(m_G(t)) - F*
  double bound = 0.0;  // B(t)
  bool violated = false;
};

struct DominanceReport {
  std::vector<DominanceRow> rows;
  std::size_t violations = 0;
  double min_margin = 0.0;
};

DominanceReport bound_vs_run(const RunHistory& history, const BoundCurve& curve,
                             double f_star);

}  // namespace hovefl
