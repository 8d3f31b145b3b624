#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hovefl/data.hpp"
#include "hovefl/numerics.hpp"

namespace hovefl {

enum class ModelKind { kRidgeLinear, kLogistic, kMlp1 };

const char* ToString(ModelKind kind);
ModelKind ParseModelKind(const std::string& name);

// 1 = trainable by the device, 0 = frozen at the broadcast value.
using CoordinateMask = std::vector<std::uint8_t>;

// Coordinate layout of the global parameter vector.
//
//   RidgeLinear: [w_0 .. w_{d-1}, b]
//   Logistic:    K blocks of [w_k0 .. w_k(d-1), b_k]
//   MLP1:        W1 (hidden x d, row-major), b1 (hidden), W2 (K x hidden), b2 (K)
//
// K is 1 for binary tasks (sigmoid head) and n_classes otherwise (softmax).
struct ModelLayout {
  ModelKind kind = ModelKind::kRidgeLinear;
  std::size_t n_features = 0;
  std::size_t n_outputs = 1;
  std::size_t hidden_width = 0;

  std::size_t dim() const;
  // Input feature multiplied by `coord`, or nullopt for coordinates every
  // device can reach (biases, hidden-to-output weights).
  std::optional<std::size_t> input_feature(std::size_t coord) const;
  // Human-readable role of a coordinate, e.g. "W1[3,7]".
  std::string describe(std::size_t coord) const;

  bool operator==(const ModelLayout&) const = default;
};

// hidden_width is ignored for non-MLP kinds. Throws when the kind does not
// fit the task (ridge needs regression, the others classification).
ModelLayout make_layout(ModelKind kind, TaskKind task, std::size_t n_features,
                        std::size_t n_classes, std::size_t hidden_width = 16);

// Parameters a device holding `features` may train.
CoordinateMask coordinate_mask(const ModelLayout& layout,
                               std::span<const std::size_t> features);
CoordinateMask full_mask(const ModelLayout& layout);

struct ModelParams {
  Vector theta;
  ModelLayout layout;

  static ModelParams Zeros(const ModelLayout& layout) {
    return {Vector(layout.dim()), layout};
  }
};

std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

struct LossReport {
  double mean_sample_loss = 0.0;
  double reg_value = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

// Rows of a dataset as seen by one device: only `features` are observed
// (the rest are zero-filled) and only `mask` coordinates are trainable.
struct SampleView {
  const Dataset* dataset = nullptr;
  std::span<const std::size_t> rows;
  std::span<const std::size_t> features;
  std::span<const std::uint8_t> mask;
};

// Per-sample loss for a zero-filled input row `x` of length n_features.
// Squared error 1/2 (yhat - y)^2 for ridge, cross-entropy otherwise.
double sample_loss(const ModelParams& params, std::span<const double> x, double y);

// F = (1/D) sum_i f(x_i, y_i) + alpha * zeta, zeta = 1/2 ||theta_mask||^2.
LossReport local_objective(const ModelParams& params, const SampleView& view,
                           double alpha);

// Analytic gradient of local_objective; off-mask coordinates are exactly 0.
Vector local_gradient(const ModelParams& params, const SampleView& view,
                      double alpha);

// Objective and gradient in one pass.
LossReport local_objective_and_gradient(const ModelParams& params,
                                        const SampleView& view, double alpha,
                                        Vector& gradient);

struct RidgeSolution {
  ModelParams params;
  double f_star = 0.0;
};

// Hessian of the full-feature ridge objective: A^T A / D + alpha I with
// A = [X, 1].
Matrix ridge_hessian(const Dataset& ds, double alpha);

// Minimizer of the full-feature ridge objective over all rows of `ds`.
// Throws kSingularSystem (suggesting alpha > 0) when A^T A is singular.
RidgeSolution ridge_closed_form(const Dataset& ds, double alpha);

// Predicted class for classification layouts.
std::size_t predict_class(const ModelParams& params, std::span<const double> x);

}  // namespace hovefl
