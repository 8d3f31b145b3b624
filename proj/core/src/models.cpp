#include "hovefl/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "hovefl/error.hpp"

namespace hovefl {

const char* ToString(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRidgeLinear: return "ridge";
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kMlp1: return "mlp";
  }
  return "unknown";
}

ModelKind ParseModelKind(const std::string& name) {
  if (name == "ridge" || name == "ridge_linear") return ModelKind::kRidgeLinear;
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp" || name == "mlp1") return ModelKind::kMlp1;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + name + "'");
}

std::size_t ModelLayout::dim() const {
  switch (kind) {
    case ModelKind::kRidgeLinear: return n_features + 1;
    case ModelKind::kLogistic: return n_outputs * (n_features + 1);
    case ModelKind::kMlp1:
      return hidden_width * n_features + hidden_width + n_outputs * hidden_width + n_outputs;
  }
  return 0;
}

std::optional<std::size_t> ModelLayout::input_feature(std::size_t coord) const {
  switch (kind) {
    case ModelKind::kRidgeLinear:
      if (coord < n_features) return coord;
      return std::nullopt;
    case ModelKind::kLogistic: {
      const std::size_t j = coord % (n_features + 1);
      if (j < n_features) return j;
      return std::nullopt;
    }
    case ModelKind::kMlp1:
      if (coord < hidden_width * n_features) return coord % n_features;
      return std::nullopt;
  }
  return std::nullopt;
}

std::string ModelLayout::describe(std::size_t coord) const {
  auto idx = [](const char* name, std::size_t a) {
    return std::string(name) + "[" + std::to_string(a) + "]";
  };
  auto idx2 = [](const char* name, std::size_t a, std::size_t b) {
    return std::string(name) + "[" + std::to_string(a) + "," + std::to_string(b) + "]";
  };
  switch (kind) {
    case ModelKind::kRidgeLinear:
      return coord < n_features ? idx("w", coord) : std::string("b");
    case ModelKind::kLogistic: {
      const std::size_t k = coord / (n_features + 1);
      const std::size_t j = coord % (n_features + 1);
      return j < n_features ? idx2("W", k, j) : idx("b", k);
    }
    case ModelKind::kMlp1: {
      const std::size_t w1 = hidden_width * n_features;
      const std::size_t w2 = w1 + hidden_width;
      const std::size_t b2 = w2 + n_outputs * hidden_width;
      if (coord < w1) return idx2("W1", coord / n_features, coord % n_features);
      if (coord < w2) return idx("b1", coord - w1);
      if (coord < b2) return idx2("W2", (coord - w2) / hidden_width, (coord - w2) % hidden_width);
      return idx("b2", coord - b2);
    }
  }
  return "?";
}

ModelLayout make_layout(ModelKind kind, TaskKind task, std::size_t n_features,
                        std::size_t n_classes, std::size_t hidden_width) {
  if (n_features == 0) {
    throw Error(ErrorCode::kInvalidArgument, "make_layout: n_features must be >= 1");
  }
  ModelLayout layout;
  layout.kind = kind;
  layout.n_features = n_features;
  if (kind == ModelKind::kRidgeLinear) {
    if (task != TaskKind::kRegression) {
      throw Error(ErrorCode::kInvalidArgument, "ridge model requires a regression task");
    }
    layout.n_outputs = 1;
    return layout;
  }
  if (!is_classification(task) || n_classes < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(ToString(kind)) + " model requires a classification task");
  }
  layout.n_outputs = n_classes == 2 ? 1 : n_classes;
  if (kind == ModelKind::kMlp1) {
    if (hidden_width == 0) {
      throw Error(ErrorCode::kInvalidArgument, "mlp hidden_width must be >= 1");
    }
    layout.hidden_width = hidden_width;
  }
  return layout;
}

CoordinateMask coordinate_mask(const ModelLayout& layout,
                               std::span<const std::size_t> features) {
  std::vector<std::uint8_t> held(layout.n_features, 0);
  for (std::size_t f : features) {
    if (f >= layout.n_features) {
      throw Error(ErrorCode::kInvalidArgument, "coordinate_mask: feature out of range");
    }
    held[f] = 1;
  }
  CoordinateMask mask(layout.dim(), 0);
  for (std::size_t c = 0; c < mask.size(); ++c) {
    const auto feature = layout.input_feature(c);
    mask[c] = !feature || held[*feature] ? 1 : 0;
  }
  return mask;
}

CoordinateMask full_mask(const ModelLayout& layout) {
  return CoordinateMask(layout.dim(), 1);
}

std::string params_to_json(const ModelParams& params) {
  nlohmann::json j;
  j["model_kind"] = ToString(params.layout.kind);
  j["n_features"] = params.layout.n_features;
  j["n_outputs"] = params.layout.n_outputs;
  j["hidden_width"] = params.layout.hidden_width;
  j["theta"] = params.theta.values();
  return j.dump();
}

ModelParams params_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelParams p;
    p.layout.kind = ParseModelKind(j.at("model_kind").get<std::string>());
    p.layout.n_features = j.at("n_features").get<std::size_t>();
    p.layout.n_outputs = j.at("n_outputs").get<std::size_t>();
    p.layout.hidden_width = j.at("hidden_width").get<std::size_t>();
    p.theta = Vector(j.at("theta").get<std::vector<double>>());
    if (p.theta.dim() != p.layout.dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "params_from_json: theta length does not match layout");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("params_from_json: ") + e.what());
  }
}

namespace {

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t class_label(const ModelLayout& layout, double y) {
  const std::size_t n_classes = layout.n_outputs == 1 ? 2 : layout.n_outputs;
  if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(n_classes)) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(y) + " outside [0, " +
                    std::to_string(n_classes) + ")");
  }
  return static_cast<std::size_t>(y);
}

// Partial dot product over observed features; unobserved inputs are zero.
inline double observed_dot(const double* weights, std::span<const double> row,
                           std::span<const std::size_t> features) {
  double s = 0.0;
  for (std::size_t j : features) s += weights[j] * row[j];
  return s;
}

struct Scratch {
  std::vector<double> logits;
  std::vector<double> dlogits;
  std::vector<double> hidden;
  std::vector<double> dhidden;
};

// Classification head: loss for `label` given logits, and d loss / d logit.
double head_loss(const std::vector<double>& logits, std::size_t label,
                 std::vector<double>* dlogits) {
  if (logits.size() == 1) {
    const double z = logits[0];
    const double y = static_cast<double>(label);
    if (dlogits) (*dlogits)[0] = sigmoid(z) - y;
    return softplus(z) - y * z;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  const double lse = zmax + std::log(sum);
  if (dlogits) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      (*dlogits)[k] = std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0);
    }
  }
  return lse - logits[label];
}

// Loss of one row; when `grad` is non-null adds scale * d loss / d theta.
double row_loss(const ModelLayout& layout, const double* theta,
                std::span<const double> row, std::span<const std::size_t> features,
                double y, double* grad, double scale, Scratch& s) {
  const std::size_t d = layout.n_features;
  switch (layout.kind) {
    case ModelKind::kRidgeLinear: {
      const double r = observed_dot(theta, row, features) + theta[d] - y;
      if (grad) {
        for (std::size_t j : features) grad[j] += scale * r * row[j];
        grad[d] += scale * r;
      }
      return 0.5 * r * r;
    }
    case ModelKind::kLogistic: {
      const std::size_t k_out = layout.n_outputs;
      const std::size_t label = class_label(layout, y);
      s.logits.resize(k_out);
      s.dlogits.resize(k_out);
      for (std::size_t k = 0; k < k_out; ++k) {
        const double* w = theta + k * (d + 1);
        s.logits[k] = observed_dot(w, row, features) + w[d];
      }
      const double loss = head_loss(s.logits, label, grad ? &s.dlogits : nullptr);
      if (grad) {
        for (std::size_t k = 0; k < k_out; ++k) {
          double* g = grad + k * (d + 1);
          const double dz = scale * s.dlogits[k];
          for (std::size_t j : features) g[j] += dz * row[j];
          g[d] += dz;
        }
      }
      return loss;
    }
    case ModelKind::kMlp1: {
      const std::size_t h = layout.hidden_width;
      const std::size_t k_out = layout.n_outputs;
      const std::size_t label = class_label(layout, y);
      const double* w1 = theta;
      const double* b1 = w1 + h * d;
      const double* w2 = b1 + h;
      const double* b2 = w2 + k_out * h;
      s.hidden.resize(h);
      s.dhidden.resize(h);
      s.logits.resize(k_out);
      s.dlogits.resize(k_out);
      for (std::size_t u = 0; u < h; ++u) {
        s.hidden[u] = std::tanh(observed_dot(w1 + u * d, row, features) + b1[u]);
      }
      for (std::size_t k = 0; k < k_out; ++k) {
        double z = b2[k];
        for (std::size_t u = 0; u < h; ++u) z += w2[k * h + u] * s.hidden[u];
        s.logits[k] = z;
      }
      const double loss = head_loss(s.logits, label, grad ? &s.dlogits : nullptr);
      if (grad) {
        double* gw1 = grad;
        double* gb1 = gw1 + h * d;
        double* gw2 = gb1 + h;
        double* gb2 = gw2 + k_out * h;
        std::fill(s.dhidden.begin(), s.dhidden.end(), 0.0);
        for (std::size_t k = 0; k < k_out; ++k) {
          const double dz = s.dlogits[k];
          gb2[k] += scale * dz;
          for (std::size_t u = 0; u < h; ++u) {
            gw2[k * h + u] += scale * dz * s.hidden[u];
            s.dhidden[u] += dz * w2[k * h + u];
          }
        }
        for (std::size_t u = 0; u < h; ++u) {
          const double dpre = scale * s.dhidden[u] * (1.0 - s.hidden[u] * s.hidden[u]);
          gb1[u] += dpre;
          for (std::size_t j : features) gw1[u * d + j] += dpre * row[j];
        }
      }
      return loss;
    }
  }
  return 0.0;
}

void check_view(const ModelParams& params, const SampleView& view) {
  if (view.dataset == nullptr || view.rows.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "local objective: empty shard");
  }
  if (params.theta.dim() != params.layout.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "theta does not match its layout");
  }
  if (view.mask.size() != params.layout.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask does not match the layout");
  }
  if (view.dataset->n_features() != params.layout.n_features) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset features do not match the layout");
  }
}

LossReport evaluate_view(const ModelParams& params, const SampleView& view,
                         double alpha, Vector* gradient) {
  check_view(params, view);
  const Dataset& ds = *view.dataset;
  const double* theta = params.theta.span().data();
  double* grad = nullptr;
  if (gradient) {
    *gradient = Vector(params.layout.dim());
    grad = gradient->span().data();
  }
  const double inv_count = 1.0 / static_cast<double>(view.rows.size());
  Scratch scratch;
  double loss_sum = 0.0;
  for (std::size_t r : view.rows) {
    loss_sum += row_loss(params.layout, theta, ds.x.row(r), view.features, ds.y[r],
                         grad, inv_count, scratch);
  }

  LossReport report;
  report.alpha = alpha;
  report.mean_sample_loss = loss_sum * inv_count;
  double reg = 0.0;
  for (std::size_t c = 0; c < params.layout.dim(); ++c) {
    if (view.mask[c]) {
      reg += theta[c] * theta[c];
      if (grad) grad[c] += alpha * theta[c];
    } else if (grad) {
      grad[c] = 0.0;
    }
  }
  report.reg_value = 0.5 * reg;
  report.total = report.mean_sample_loss + alpha * report.reg_value;
  return report;
}

}  // namespace

double sample_loss(const ModelParams& params, std::span<const double> x, double y) {
  if (x.size() != params.layout.n_features) {
    throw Error(ErrorCode::kDimensionMismatch, "sample_loss: input length mismatch");
  }
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  Scratch scratch;
  return row_loss(params.layout, params.theta.span().data(), x, all, y, nullptr, 0.0,
                  scratch);
}

LossReport local_objective(const ModelParams& params, const SampleView& view,
                           double alpha) {
  return evaluate_view(params, view, alpha, nullptr);
}

Vector local_gradient(const ModelParams& params, const SampleView& view, double alpha) {
  Vector g;
  evaluate_view(params, view, alpha, &g);
  return g;
}

LossReport local_objective_and_gradient(const ModelParams& params,
                                        const SampleView& view, double alpha,
                                        Vector& gradient) {
  return evaluate_view(params, view, alpha, &gradient);
}

Matrix ridge_hessian(const Dataset& ds, double alpha) {
  if (ds.n_samples() == 0) {
    throw Error(ErrorCode::kEmptyDataset, "ridge_hessian: empty dataset");
  }
  const std::size_t d = ds.n_features();
  const std::size_t m = d + 1;
  Matrix h(m, m);
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    const auto row = ds.x.row(i);
    for (std::size_t a = 0; a < m; ++a) {
      const double xa = a < d ? row[a] : 1.0;
      for (std::size_t b = a; b < m; ++b) {
        h(a, b) += xa * (b < d ? row[b] : 1.0);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(ds.n_samples());
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      h(a, b) *= inv;
      h(b, a) = h(a, b);
    }
    h(a, a) += alpha;
  }
  return h;
}

RidgeSolution ridge_closed_form(const Dataset& ds, double alpha) {
  if (ds.task != TaskKind::kRegression) {
    throw Error(ErrorCode::kInvalidArgument, "ridge_closed_form: regression task required");
  }
  const std::size_t d = ds.n_features();
  const Matrix h = ridge_hessian(ds, alpha);
  Vector rhs(d + 1);
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    const auto row = ds.x.row(i);
    for (std::size_t a = 0; a < d; ++a) rhs[a] += row[a] * ds.y[i];
    rhs[d] += ds.y[i];
  }
  const double inv = 1.0 / static_cast<double>(ds.n_samples());
  for (auto& v : rhs) v *= inv;

  Vector theta;
  try {
    theta = cholesky_solve(h, rhs);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularSystem) throw;
    throw Error(ErrorCode::kSingularSystem,
                "ridge_closed_form: normal equations are singular; use alpha > 0");
  }

  RidgeSolution sol;
  sol.params.layout = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, d, 0);
  sol.params.theta = std::move(theta);
  std::vector<std::size_t> rows(ds.n_samples());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), 0);
  const CoordinateMask mask = full_mask(sol.params.layout);
  sol.f_star = local_objective(sol.params, {&ds, rows, features, mask}, alpha).total;
  return sol;
}

std::size_t predict_class(const ModelParams& params, std::span<const double> x) {
  const ModelLayout& layout = params.layout;
  if (layout.kind == ModelKind::kRidgeLinear) {
    throw Error(ErrorCode::kInvalidArgument, "predict_class: regression model");
  }
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  Scratch s;
  // Reuse the loss path for logits; the label value is irrelevant here.
  row_loss(layout, params.theta.span().data(), x, all, 0.0, nullptr, 0.0, s);
  if (layout.n_outputs == 1) return s.logits[0] > 0.0 ? 1 : 0;
  return static_cast<std::size_t>(
      std::max_element(s.logits.begin(), s.logits.end()) - s.logits.begin());
}

}  // namespace hovefl
