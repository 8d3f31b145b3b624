#include "hovefl/federation.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "hovefl/error.hpp"

namespace hovefl {

const char* ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

const char* ToString(WeightScheme scheme) {
  return scheme == WeightScheme::kSampleProportional ? "sample_proportional" : "uniform";
}

const char* ToString(InitKind kind) {
  return kind == InitKind::kZero ? "zero" : "gaussian";
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, field + " " + why);
  };
  if (!(mu > 0.0) || !std::isfinite(mu)) bad("train.mu", "must be > 0");
  if (t_local < 1) bad("train.t_local", "must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("train.alpha", "must be in [0, 1]");
  if (optimizer.kind == OptimizerKind::kAdam) {
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) {
      bad("train.optimizer.beta1", "must be in [0, 1)");
    }
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
      bad("train.optimizer.beta2", "must be in [0, 1)");
    }
    if (!(optimizer.epsilon > 0.0)) bad("train.optimizer.epsilon", "must be > 0");
  }
  if (init == InitKind::kGaussian && !(init_scale >= 0.0)) {
    bad("train.init.scale", "must be >= 0");
  }
  if (threads < 1) bad("train.threads", "must be >= 1");
}

EvalResult evaluate(const ModelParams& params, const Dataset& split) {
  if (split.n_samples() == 0) {
    throw Error(ErrorCode::kEmptyDataset, "evaluate: empty split");
  }
  EvalResult result;
  double sum = 0.0;
  std::size_t correct = 0;
  const bool classify = params.layout.kind != ModelKind::kRidgeLinear;
  for (std::size_t i = 0; i < split.n_samples(); ++i) {
    sum += sample_loss(params, split.x.row(i), split.y[i]);
    if (classify && predict_class(params, split.x.row(i)) ==
                        static_cast<std::size_t>(split.y[i])) {
      ++correct;
    }
  }
  const double n = static_cast<double>(split.n_samples());
  result.loss = sum / n;
  if (classify) result.accuracy = static_cast<double>(correct) / n;
  return result;
}

namespace {

std::vector<std::size_t> draw_batch(const std::vector<std::size_t>& rows,
                                    std::size_t batch_size, RngStream& rng) {
  // Partial Fisher-Yates: the first batch_size entries form the batch.
  std::vector<std::size_t> pool = rows;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(batch_size);
  return pool;
}

}  // namespace

LocalUpdate local_train(const Topology& topology, std::size_t shard,
                        const Dataset& train, const ModelParams& broadcast,
                        const TrainConfig& cfg, std::size_t round, RngStream& rng) {
  const DeviceShard& device = topology.shards.at(shard);
  const CoordinateMask& mask = topology.masks.at(shard);
  const std::size_t dim = broadcast.layout.dim();

  LocalUpdate update;
  update.device_id = device.device_id;
  update.mask = mask;
  update.sample_count = device.sample_count();
  update.params_after = broadcast;
  ModelParams& params = update.params_after;

  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= device.sample_count();
  Vector m1, m2;
  if (cfg.optimizer.kind == OptimizerKind::kAdam) {
    m1 = Vector(dim);
    m2 = Vector(dim);
  }
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  Vector grad;
  std::vector<std::size_t> batch;

  for (std::size_t it = 0; it < cfg.t_local; ++it) {
    std::span<const std::size_t> rows = device.sample_indices;
    if (!full_batch) {
      batch = draw_batch(device.sample_indices, cfg.batch_size, rng);
      rows = batch;
    }
    const SampleView view{&train, rows, device.feature_indices, mask};
    const LossReport report = local_objective_and_gradient(params, view, cfg.alpha, grad);
    if (!std::isfinite(report.total) || !all_finite(grad)) {
      throw DivergenceError("device " + std::to_string(device.device_id) +
                                ": non-finite loss at local iteration " +
                                std::to_string(it) + " of round " + std::to_string(round),
                            round, device.device_id, it);
    }
    if (cfg.record_grad_trace) update.grad_trace.push_back(norm(grad));

    if (cfg.optimizer.kind == OptimizerKind::kSgd) {
      for (std::size_t c = 0; c < dim; ++c) {
        if (mask[c]) params.theta[c] -= cfg.mu * grad[c];
      }
    } else {
      const auto& opt = cfg.optimizer;
      beta1_pow *= opt.beta1;
      beta2_pow *= opt.beta2;
      for (std::size_t c = 0; c < dim; ++c) {
        if (!mask[c]) continue;
        m1[c] = opt.beta1 * m1[c] + (1.0 - opt.beta1) * grad[c];
        m2[c] = opt.beta2 * m2[c] + (1.0 - opt.beta2) * grad[c] * grad[c];
        const double m_hat = m1[c] / (1.0 - beta1_pow);
        const double v_hat = m2[c] / (1.0 - beta2_pow);
        params.theta[c] -= cfg.mu * m_hat / (std::sqrt(v_hat) + opt.epsilon);
      }
    }
    if (!all_finite(params.theta)) {
      throw DivergenceError("device " + std::to_string(device.device_id) +
                                ": non-finite parameters after local iteration " +
                                std::to_string(it) + " of round " + std::to_string(round),
                            round, device.device_id, it);
    }
  }
  return update;
}

ModelParams aggregate(std::span<const LocalUpdate> updates, const Topology& topology,
                      WeightScheme scheme) {
  if (updates.size() != topology.n_devices()) {
    throw Error(ErrorCode::kInvalidArgument,
                "aggregate: expected one update per device (" +
                    std::to_string(topology.n_devices()) + "), got " +
                    std::to_string(updates.size()));
  }
  const std::size_t dim = topology.global_dim();
  for (std::size_t n = 0; n < updates.size(); ++n) {
    if (updates[n].params_after.theta.dim() != dim || updates[n].mask.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "aggregate: update dimension mismatch");
    }
    if (updates[n].mask != topology.masks[n]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "aggregate: mask of device " + std::to_string(updates[n].device_id) +
                      " differs from the topology");
    }
  }

  std::vector<double> weights(updates.size(), 1.0);
  if (scheme == WeightScheme::kSampleProportional) {
    for (std::size_t n = 0; n < updates.size(); ++n) {
      weights[n] = static_cast<double>(updates[n].sample_count);
    }
  }

  ModelParams out{Vector(dim), topology.layout};
  for (std::size_t c = 0; c < dim; ++c) {
    // Average offsets from the first contributor so identical inputs
    // reproduce exactly.
    std::optional<double> anchor;
    double weighted_offset = 0.0;
    double total_weight = 0.0;
    for (std::size_t n = 0; n < updates.size(); ++n) {
      if (!updates[n].mask[c]) continue;
      const double value = updates[n].params_after.theta[c];
      if (!anchor) anchor = value;
      weighted_offset += weights[n] * (value - *anchor);
      total_weight += weights[n];
    }
    if (!anchor || !(total_weight > 0.0)) {
      throw Error(ErrorCode::kCoverage, "aggregate: coordinate " + std::to_string(c) +
                                            " (" + topology.layout.describe(c) +
                                            ") has no contributing device");
    }
    out.theta[c] = *anchor + weighted_offset / total_weight;
  }
  return out;
}

double gradient_variance(std::span<const Vector> gradients) {
  if (gradients.empty()) return 0.0;
  const std::size_t dim = gradients.front().dim();
  Vector mean(dim);
  for (const auto& g : gradients) axpy(1.0, g, mean);
  mean = (1.0 / static_cast<double>(gradients.size())) * mean;
  double total = 0.0;
  for (const auto& g : gradients) total += squared_norm(g - mean);
  return std::sqrt(total);
}

ModelParams initial_params(const ModelLayout& layout, const TrainConfig& cfg,
                           std::uint64_t seed) {
  ModelParams p = ModelParams::Zeros(layout);
  if (cfg.init == InitKind::kGaussian) {
    RngStream rng(seed, make_stream_id(StreamPurpose::kInit));
    p.theta = cfg.init_scale * gaussian(rng, layout.dim());
  }
  return p;
}

Federation::Federation(const Dataset& train, const Dataset& test, Topology topology,
                       TrainConfig cfg, std::uint64_t seed)
    : Federation(train, test, topology, cfg, seed,
                 initial_params(topology.layout, cfg, seed)) {}

Federation::Federation(const Dataset& train, const Dataset& test, Topology topology,
                       TrainConfig cfg, std::uint64_t seed, ModelParams init)
    : train_(train), test_(test), topology_(std::move(topology)), cfg_(cfg), seed_(seed) {
  cfg_.validate();
  topology_.validate(train_);
  if (!(init.layout == topology_.layout) || init.theta.dim() != topology_.global_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "Federation: init params do not fit the topology");
  }
  all_rows_.resize(train_.n_samples());
  std::iota(all_rows_.begin(), all_rows_.end(), 0);
  all_features_.resize(train_.n_features());
  std::iota(all_features_.begin(), all_features_.end(), 0);
  all_coords_ = full_mask(topology_.layout);
  global_.params = std::move(init);
  global_.round = 0;
  const EvalResult tr = evaluate(global_.params, train_);
  global_.train_loss = tr.loss;
  global_.test_loss = test_.n_samples() ? evaluate(global_.params, test_).loss
                                        : std::numeric_limits<double>::quiet_NaN();
}

std::vector<Vector> Federation::device_gradients(const ModelParams& params) const {
  std::vector<Vector> grads;
  grads.reserve(topology_.n_devices());
  for (std::size_t n = 0; n < topology_.n_devices(); ++n) {
    grads.push_back(local_gradient(params, topology_.view(train_, n), cfg_.alpha));
  }
  return grads;
}

LossReport Federation::global_objective(const ModelParams& params, Vector* gradient) const {
  const SampleView view{&train_, all_rows_, all_features_, all_coords_};
  if (gradient) return local_objective_and_gradient(params, view, cfg_.alpha, *gradient);
  return local_objective(params, view, cfg_.alpha);
}

RoundRecord Federation::describe(const ModelParams& params, std::size_t round,
                                 std::vector<LossReport> device_reports) const {
  RoundRecord rec;
  rec.round = round;
  rec.device_reports = std::move(device_reports);
  const EvalResult tr = evaluate(params, train_);
  rec.train_loss = tr.loss;
  rec.train_accuracy = tr.accuracy;
  if (test_.n_samples()) {
    const EvalResult te = evaluate(params, test_);
    rec.test_loss = te.loss;
    rec.test_accuracy = te.accuracy;
  } else {
    rec.test_loss = std::numeric_limits<double>::quiet_NaN();
  }
  if (cfg_.track_diagnostics) {
    Vector g;
    rec.objective = global_objective(params, &g).total;
    rec.grad_norm = norm(g);
    rec.sigma_hat = gradient_variance(device_gradients(params));
  } else {
    rec.objective = global_objective(params, nullptr).total;
    rec.grad_norm = std::numeric_limits<double>::quiet_NaN();
    rec.sigma_hat = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

RoundRecord Federation::snapshot() const {
  std::vector<LossReport> reports;
  for (std::size_t n = 0; n < topology_.n_devices(); ++n) {
    reports.push_back(local_objective(global_.params, topology_.view(train_, n), cfg_.alpha));
  }
  return describe(global_.params, global_.round, std::move(reports));
}

RoundRecord Federation::run_round() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t round = global_.round + 1;
  const std::size_t n_devices = topology_.n_devices();
  std::vector<LocalUpdate> updates(n_devices);
  std::vector<std::exception_ptr> failures(n_devices);

  auto train_device = [&](std::size_t n) {
    try {
      RngStream rng(seed_, make_stream_id(StreamPurpose::kLocalTraining,
                                          static_cast<std::uint64_t>(n), round));
      updates[n] = local_train(topology_, n, train_, global_.params, cfg_, round, rng);
    } catch (...) {
      failures[n] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(cfg_.threads, n_devices);
  if (workers <= 1) {
    for (std::size_t n = 0; n < n_devices; ++n) train_device(n);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t n = w; n < n_devices; n += workers) train_device(n);
      });
    }
  }
  // Lowest device index wins so error reporting is order independent.
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  ModelParams next = aggregate(updates, topology_, cfg_.weight_scheme);
  if (!all_finite(next.theta)) {
    throw DivergenceError("non-finite global model after aggregation in round " +
                              std::to_string(round),
                          round, -1, 0);
  }

  std::vector<LossReport> reports;
  reports.reserve(n_devices);
  for (std::size_t n = 0; n < n_devices; ++n) {
    reports.push_back(
        local_objective(updates[n].params_after, topology_.view(train_, n), cfg_.alpha));
  }
  RoundRecord rec = describe(next, round, std::move(reports));
  if (!std::isfinite(rec.objective) || !std::isfinite(rec.train_loss)) {
    throw DivergenceError("non-finite global loss in round " + std::to_string(round),
                          round, -1, 0);
  }
  global_.params = std::move(next);
  global_.round = round;
  global_.train_loss = rec.train_loss;
  global_.test_loss = rec.test_loss;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

RunHistory run_federation(const Dataset& train, const Dataset& test,
                          const Topology& topology, const TrainConfig& cfg,
                          std::uint64_t seed, DivergencePolicy policy) {
  Federation fed(train, test, topology, cfg, seed);
  RunHistory history;
  history.initial = fed.snapshot();
  history.rounds.reserve(cfg.rounds);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    try {
      history.rounds.push_back(fed.run_round());
    } catch (const DivergenceError& e) {
      if (policy == DivergencePolicy::kThrow) throw;
      history.diverged_at_round = e.round();
      history.divergence_message = e.what();
      break;
    }
  }
  history.final_params = fed.global().params;
  return history;
}

}  // namespace hovefl
