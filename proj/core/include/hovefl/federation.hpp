#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hovefl/data.hpp"
#include "hovefl/models.hpp"
#include "hovefl/rng.hpp"
#include "hovefl/topology.hpp"

namespace hovefl {

enum class OptimizerKind { kSgd, kAdam };
enum class WeightScheme { kSampleProportional, kUniform };
enum class InitKind { kZero, kGaussian };

const char* ToString(OptimizerKind kind);
const char* ToString(WeightScheme scheme);
const char* ToString(InitKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double mu = 0.01;
  std::size_t t_local = 1;
  std::size_t rounds = 1;
  double alpha = 0.0;
  OptimizerConfig optimizer;
  // 0 means full batch.
  std::size_t batch_size = 0;
  WeightScheme weight_scheme = WeightScheme::kSampleProportional;
  InitKind init = InitKind::kZero;
  double init_scale = 0.01;
  // Worker threads for local training; results do not depend on it.
  std::size_t threads = 1;
  // Per-round global gradient norm and device-gradient spread. Needed by
  // the descent audit and the bound checks.
  bool track_diagnostics = true;
  bool record_grad_trace = false;

  // Throws kInvalidArgument naming the offending field.
  void validate() const;
};

struct LocalUpdate {
  int device_id = 0;
  ModelParams params_after;
  CoordinateMask mask;
  std::size_t sample_count = 0;
  // Gradient norm at each local iteration, when requested.
  std::vector<double> grad_trace;
};

struct GlobalModel {
  ModelParams params;
  std::size_t round = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
};

// State after `round` aggregations. Diagnostics are evaluated at the
// aggregated model m_G(round): `objective` is the regularized global
// objective over all training rows, `grad_norm` its gradient norm and
// `sigma_hat` the spread of full-batch device gradients at that point.
struct RoundRecord {
  std::size_t round = 0;
  std::vector<LossReport> device_reports;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;
  double objective = 0.0;
  double grad_norm = 0.0;
  double sigma_hat = 0.0;
  double wall_seconds = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  std::optional<double> accuracy;
};

// Mean unregularized sample loss over `split`; accuracy for classifiers.
EvalResult evaluate(const ModelParams& params, const Dataset& split);

// T_L optimizer steps on one device starting from the broadcast params.
// Minibatches are drawn from `rng`; Adam moments start at zero.
LocalUpdate local_train(const Topology& topology, std::size_t shard,
                        const Dataset& train, const ModelParams& broadcast,
                        const TrainConfig& cfg, std::size_t round, RngStream& rng);

// Coordinate-wise weighted mean over the devices whose mask covers each
// coordinate. Weights follow `scheme` and are renormalized per coordinate.
ModelParams aggregate(std::span<const LocalUpdate> updates, const Topology& topology,
                      WeightScheme scheme);

// sqrt(sum_n ||g_n - mean(g)||^2).
double gradient_variance(std::span<const Vector> gradients);

class Federation {
 public:
  // `test` may be empty; test metrics are then NaN.
  Federation(const Dataset& train, const Dataset& test, Topology topology,
             TrainConfig cfg, std::uint64_t seed);
  Federation(const Dataset& train, const Dataset& test, Topology topology,
             TrainConfig cfg, std::uint64_t seed, ModelParams init);

  const GlobalModel& global() const noexcept { return global_; }
  const Topology& topology() const noexcept { return topology_; }
  const TrainConfig& config() const noexcept { return cfg_; }

  // Record describing the current global model without training.
  RoundRecord snapshot() const;
  // Local training on every device, aggregation, evaluation.
  RoundRecord run_round();

  // Full-batch gradient of each device's local objective at `params`.
  std::vector<Vector> device_gradients(const ModelParams& params) const;
  // Regularized objective over all training rows with every coordinate
  // trainable; fills `gradient` when non-null.
  LossReport global_objective(const ModelParams& params, Vector* gradient) const;

 private:
  RoundRecord describe(const ModelParams& params, std::size_t round,
                       std::vector<LossReport> device_reports) const;

  const Dataset& train_;
  const Dataset& test_;
  Topology topology_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  GlobalModel global_;
  std::vector<std::size_t> all_rows_;
  std::vector<std::size_t> all_features_;
  CoordinateMask all_coords_;
};

ModelParams initial_params(const ModelLayout& layout, const TrainConfig& cfg,
                           std::uint64_t seed);

enum class DivergencePolicy { kThrow, kStop };

struct RunHistory {
  RoundRecord initial;
  std::vector<RoundRecord> rounds;
  ModelParams final_params;
  // Set when the run stopped early under DivergencePolicy::kStop.
  std::optional<std::size_t> diverged_at_round;
  std::string divergence_message;
};

RunHistory run_federation(const Dataset& train, const Dataset& test,
                          const Topology& topology, const TrainConfig& cfg,
                          std::uint64_t seed,
                          DivergencePolicy policy = DivergencePolicy::kThrow);

}  // namespace hovefl
