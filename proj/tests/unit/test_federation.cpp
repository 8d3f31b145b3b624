#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "hovefl/error.hpp"
#include "hovefl/federation.hpp"
#include "test_helpers.hpp"

namespace hovefl {
namespace {

using testing::iota_indices;
using testing::manual_topology;
using testing::shard;

const Dataset kNoTest;

TrainConfig sgd(double mu, std::size_t t_local, std::size_t rounds) {
  TrainConfig cfg;
  cfg.mu = mu;
  cfg.t_local = t_local;
  cfg.rounds = rounds;
  return cfg;
}

Topology single_device(const Dataset& ds, const ModelLayout& layout) {
  TopologySpec spec;
  spec.n_horizontal = 1;
  return build_topology(ds, spec, layout, 1);
}

// Independent ridge gradient: (1/D) sum_i (yhat_i - y_i) [x_i, 1] + alpha theta.
Vector ridge_gradient(const Dataset& ds, const Vector& theta, double alpha) {
  const std::size_t d = ds.n_features();
  Vector g(d + 1);
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    double yhat = theta[d];
    for (std::size_t j = 0; j < d; ++j) yhat += theta[j] * ds.x(i, j);
    const double r = (yhat - ds.y[i]) / static_cast<double>(ds.n_samples());
    for (std::size_t j = 0; j < d; ++j) g[j] += r * ds.x(i, j);
    g[d] += r;
  }
  for (std::size_t j = 0; j <= d; ++j) g[j] += alpha * theta[j];
  return g;
}

TEST(LocalTrain, OneStepOnQuadratic) {
  // One sample with x = sqrt(2), y = 3 sqrt(2): along w the loss is (w - 3)^2.
  Dataset ds;
  ds.x = Matrix(1, 1, std::vector<double>{std::sqrt(2.0)});
  ds.y = Vector{3.0 * std::sqrt(2.0)};
  ds.sample_ids = {"s0"};
  ds.feature_ids = {"f0"};
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 1, 0);
  Federation fed(ds, kNoTest, single_device(ds, l), sgd(0.1, 1, 1), 1);
  fed.run_round();
  EXPECT_NEAR(fed.global().params.theta[0], 0.6, 1e-15);
  EXPECT_NEAR(fed.global().params.theta[1], 0.3 * std::sqrt(2.0), 1e-15);
}

TEST(LocalTrain, StationaryPointUnchanged) {
  const Dataset ds = generate_regression(80, 4, 0.3, 2);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 4, 0);
  const Topology topo = single_device(ds, l);
  TrainConfig cfg = sgd(0.2, 5, 1);
  cfg.alpha = 0.1;
  const ModelParams opt = ridge_closed_form(ds, 0.1).params;
  RngStream rng(1, 1);
  const LocalUpdate u = local_train(topo, 0, ds, opt, cfg, 1, rng);
  EXPECT_LT(max_abs_diff(u.params_after.theta, opt.theta), 1e-12);
}

TEST(LocalTrain, AdamMatchesScriptedRecurrence) {
  const Dataset ds = generate_classification(60, 4, 3, 1.0, 3);
  const ModelLayout l = make_layout(ModelKind::kLogistic, ds.task, 4, 3);
  std::vector<DeviceShard> shards;
  shards.push_back(shard(0, DeviceRole::kHorizontal, iota_indices(30), iota_indices(4)));
  std::vector<std::size_t> rest(30);
  for (std::size_t i = 0; i < 30; ++i) rest[i] = 30 + i;
  shards.push_back(shard(1, DeviceRole::kVertical, rest, {1, 2}));
  const Topology topo = manual_topology(l, shards, 1);

  TrainConfig cfg = sgd(0.05, 5, 1);
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.alpha = 0.01;
  RngStream init_rng(3, 9);
  const ModelParams start{gaussian(init_rng, l.dim()), l};
  RngStream rng(3, 1);
  const LocalUpdate u = local_train(topo, 1, ds, start, cfg, 1, rng);

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Vector theta = start.theta;
  std::vector<double> m(l.dim(), 0.0), v(l.dim(), 0.0);
  for (int t = 1; t <= 5; ++t) {
    const Vector g = local_gradient({theta, l}, topo.view(ds, 1), cfg.alpha);
    for (std::size_t c = 0; c < l.dim(); ++c) {
      if (!topo.masks[1][c]) continue;
      m[c] = b1 * m[c] + (1 - b1) * g[c];
      v[c] = b2 * v[c] + (1 - b2) * g[c] * g[c];
      const double mh = m[c] / (1 - std::pow(b1, t));
      const double vh = v[c] / (1 - std::pow(b2, t));
      theta[c] -= cfg.mu * mh / (std::sqrt(vh) + eps);
    }
  }
  EXPECT_LT(max_abs_diff(u.params_after.theta, theta), 1e-10);
  for (std::size_t c = 0; c < l.dim(); ++c) {
    if (!topo.masks[1][c]) {
      EXPECT_EQ(u.params_after.theta[c], start.theta[c]);
    }
  }
}

TEST(LocalTrain, MinibatchMaskPreserved) {
  const Dataset ds = generate_classification(200, 6, 3, 1.0, 4);
  const ModelLayout l = make_layout(ModelKind::kMlp1, ds.task, 6, 3, 5);
  TopologySpec spec;
  spec.n_horizontal = 2;
  spec.n_vertical = 3;
  const Topology topo = build_topology(ds, spec, l, 4);
  TrainConfig cfg = sgd(0.01, 7, 1);
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.batch_size = 8;
  RngStream init_rng(4, 9);
  const ModelParams start{gaussian(init_rng, l.dim()), l};
  for (std::size_t n = 2; n < 5; ++n) {
    RngStream rng(4, n);
    const LocalUpdate u = local_train(topo, n, ds, start, cfg, 1, rng);
    EXPECT_EQ(u.sample_count, topo.shards[n].sample_count());
    for (std::size_t c = 0; c < l.dim(); ++c) {
      if (!topo.masks[n][c]) {
        EXPECT_EQ(u.params_after.theta[c], start.theta[c]);
      }
    }
    EXPECT_NE(u.params_after.theta, start.theta);
  }
}

TEST(LocalTrain, ZeroStepSizeLeavesParams) {
  // Configs reject mu = 0, but the optimizer itself treats it as a no-op.
  const Dataset ds = generate_regression(40, 3, 0.3, 5);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 3, 0);
  const Topology topo = single_device(ds, l);
  TrainConfig cfg = sgd(0.0, 3, 1);
  RngStream init_rng(5, 9);
  const ModelParams start{gaussian(init_rng, l.dim()), l};
  RngStream rng(5, 1);
  const LocalUpdate u = local_train(topo, 0, ds, start, cfg, 1, rng);
  EXPECT_EQ(u.params_after.theta, start.theta);
  const std::vector<LocalUpdate> updates{u};
  EXPECT_EQ(aggregate(updates, topo, WeightScheme::kSampleProportional).theta, start.theta);
}

TEST(LocalTrain, DivergenceNamesDeviceAndIteration) {
  const Dataset ds = generate_regression(40, 3, 0.3, 5);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 3, 0);
  const Topology topo = single_device(ds, l);
  RngStream rng(5, 1);
  try {
    local_train(topo, 0, ds, ModelParams::Zeros(l), sgd(1e200, 50, 1), 4, rng);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.device_id(), 0);
    EXPECT_EQ(e.round(), 4u);
    EXPECT_NE(std::string(e.what()).find("device 0"), std::string::npos);
  }
}

Topology three_device_topology(const ModelLayout& l) {
  std::vector<DeviceShard> shards;
  shards.push_back(shard(0, DeviceRole::kHorizontal, {0, 1}, {0, 1}));
  shards.push_back(shard(1, DeviceRole::kHorizontal, {2, 3, 4, 5}, {0, 1}));
  shards.push_back(shard(2, DeviceRole::kVertical, {6, 7, 8}, {1}));
  return manual_topology(l, shards, 2);
}

LocalUpdate update_of(const Topology& t, std::size_t n, Vector theta) {
  return {t.shards[n].device_id, {std::move(theta), t.layout}, t.masks[n],
          t.shards[n].sample_count(), {}};
}

TEST(Aggregate, HandComputedWeightedMean) {
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, 2, 0);
  const Topology t = three_device_topology(l);
  // Coordinates [w0, w1, b]; device 2 holds feature 1 only, so w0 is not its.
  const std::vector<LocalUpdate> u{update_of(t, 0, Vector{1.0, 2.0, 3.0}),
                                   update_of(t, 1, Vector{4.0, -1.0, 0.0}),
                                   update_of(t, 2, Vector{99.0, 5.0, 6.0})};
  const ModelParams sp = aggregate(u, t, WeightScheme::kSampleProportional);
  // Weights 2, 4, 3.
  EXPECT_NEAR(sp.theta[0], (2 * 1.0 + 4 * 4.0) / 6.0, 1e-15);
  EXPECT_NEAR(sp.theta[1], (2 * 2.0 + 4 * -1.0 + 3 * 5.0) / 9.0, 1e-15);
  EXPECT_NEAR(sp.theta[2], (2 * 3.0 + 4 * 0.0 + 3 * 6.0) / 9.0, 1e-15);
  const ModelParams un = aggregate(u, t, WeightScheme::kUniform);
  EXPECT_NEAR(un.theta[0], 2.5, 1e-15);
  EXPECT_NEAR(un.theta[1], 2.0, 1e-15);
  EXPECT_NEAR(un.theta[2], 3.0, 1e-15);
}

TEST(Aggregate, SingleDeviceIdentity) {
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, 2, 0);
  const Topology t = manual_topology(
      l, {shard(0, DeviceRole::kHorizontal, {0, 1, 2}, {0, 1})}, 1);
  const std::vector<LocalUpdate> u{update_of(t, 0, Vector{0.1, 0.2, 0.3})};
  for (auto scheme : {WeightScheme::kSampleProportional, WeightScheme::kUniform}) {
    EXPECT_EQ(aggregate(u, t, scheme).theta, (Vector{0.1, 0.2, 0.3}));
  }
}

TEST(Aggregate, IdenticalUpdatesAreFixedPoint) {
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, 2, 0);
  const Topology t = three_device_topology(l);
  RngStream rng(7, 7);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector v = gaussian(rng, 3);
    std::vector<LocalUpdate> u;
    for (std::size_t n = 0; n < 3; ++n) {
      Vector theta = v;
      if (!t.masks[n][0]) theta[0] = 1e6;  // off-mask value must not leak in
      u.push_back(update_of(t, n, theta));
    }
    EXPECT_EQ(aggregate(u, t, WeightScheme::kSampleProportional).theta, v);
  }
}

TEST(Aggregate, StaysWithinContributorRange) {
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, 2, 0);
  const Topology t = three_device_topology(l);
  RngStream rng(8, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LocalUpdate> u;
    for (std::size_t n = 0; n < 3; ++n) u.push_back(update_of(t, n, 10.0 * gaussian(rng, 3)));
    const ModelParams agg = aggregate(u, t, WeightScheme::kSampleProportional);
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t n = 0; n < 3; ++n) {
        if (!t.masks[n][c]) continue;
        lo = std::min(lo, u[n].params_after.theta[c]);
        hi = std::max(hi, u[n].params_after.theta[c]);
      }
      EXPECT_GE(agg.theta[c], lo);
      EXPECT_LE(agg.theta[c], hi);
    }
  }
}

TEST(Aggregate, UncoveredCoordinateIsCoverageError) {
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, TaskKind::kRegression, 2, 0);
  const Topology t = manual_topology(l, {shard(0, DeviceRole::kVertical, {0, 1}, {1})}, 0);
  const std::vector<LocalUpdate> u{update_of(t, 0, Vector{1, 2, 3})};
  try {
    aggregate(u, t, WeightScheme::kUniform);
    FAIL() << "expected coverage error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCoverage);
  }
}

TEST(RunRound, SingleDeviceIsCentralizedGradientDescent) {
  const Dataset ds = generate_regression(120, 5, 0.4, 9);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 5, 0);
  TrainConfig cfg = sgd(0.3, 1, 100);
  cfg.alpha = 0.05;
  Federation fed(ds, kNoTest, single_device(ds, l), cfg, 9);
  Vector ref(l.dim());
  for (int step = 0; step < 100; ++step) {
    fed.run_round();
    axpy(-cfg.mu, ridge_gradient(ds, ref, cfg.alpha), ref);
    ASSERT_LE(max_abs_diff(fed.global().params.theta, ref), 1e-12) << "step " << step;
  }
}

TEST(RunRound, IdenticalShardsMatchPooledStep) {
  const Dataset base = generate_classification(40, 3, 3, 1.0, 10);
  const Dataset ds = testing::repeat_rows(base, 2);
  const ModelLayout l = make_layout(ModelKind::kLogistic, ds.task, 3, 3);
  std::vector<std::size_t> first(40), second(40);
  for (std::size_t i = 0; i < 40; ++i) {
    first[i] = i;
    second[i] = 40 + i;
  }
  const Topology topo = manual_topology(l,
                                        {shard(0, DeviceRole::kHorizontal, first, iota_indices(3)),
                                         shard(1, DeviceRole::kHorizontal, second, iota_indices(3))},
                                        2);
  TrainConfig cfg = sgd(0.5, 1, 1);
  cfg.alpha = 0.1;
  RngStream init_rng(10, 3);
  const ModelParams init{gaussian(init_rng, l.dim()), l};
  Federation fed(ds, kNoTest, topo, cfg, 10, init);
  const RoundRecord before = fed.snapshot();
  EXPECT_EQ(before.sigma_hat, 0.0);
  fed.run_round();

  const auto fv = testing::full_view(ds, l);
  Vector expect = init.theta;
  axpy(-cfg.mu, local_gradient(init, fv.view(ds), cfg.alpha), expect);
  EXPECT_LE(max_abs_diff(fed.global().params.theta, expect), 1e-12);
}

TEST(RunFederation, ZeroRoundsKeepsInitialModel) {
  const Dataset ds = generate_regression(50, 3, 0.3, 11);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 3, 0);
  TrainConfig cfg = sgd(0.1, 1, 0);
  cfg.init = InitKind::kGaussian;
  cfg.init_scale = 0.5;
  const RunHistory h = run_federation(ds, Dataset{}, single_device(ds, l), cfg, 11);
  EXPECT_TRUE(h.rounds.empty());
  EXPECT_EQ(h.final_params.theta, initial_params(l, cfg, 11).theta);
  EXPECT_EQ(h.initial.round, 0u);
}

TEST(RunFederation, ZeroInitByDefault) {
  const ModelLayout l = make_layout(ModelKind::kLogistic, TaskKind::kMulticlass, 3, 3);
  EXPECT_EQ(initial_params(l, TrainConfig{}, 5).theta, Vector(l.dim()));
}

TEST(RunFederation, DeterministicAndThreadIndependent) {
  const Dataset all = generate_classification(400, 6, 3, 1.5, 12);
  const auto split = split_train_test(all, 0.25, 12);
  const ModelLayout l = make_layout(ModelKind::kMlp1, all.task, 6, 3, 6);
  TopologySpec spec;
  spec.n_horizontal = 3;
  spec.n_vertical = 3;
  spec.horizontal.dirichlet_beta = 0.3;
  const Topology topo = build_topology(split.train, spec, l, 12);
  TrainConfig cfg = sgd(0.01, 4, 6);
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.batch_size = 16;
  cfg.init = InitKind::kGaussian;
  cfg.init_scale = 0.1;
  const RunHistory a = run_federation(split.train, split.test, topo, cfg, 12);
  const RunHistory b = run_federation(split.train, split.test, topo, cfg, 12);
  cfg.threads = 4;
  const RunHistory c = run_federation(split.train, split.test, topo, cfg, 12);
  EXPECT_EQ(a.final_params.theta, b.final_params.theta);
  EXPECT_EQ(a.final_params.theta, c.final_params.theta);
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    EXPECT_EQ(a.rounds[r].test_loss, c.rounds[r].test_loss);
    EXPECT_EQ(a.rounds[r].sigma_hat, c.rounds[r].sigma_hat);
    EXPECT_EQ(a.rounds[r].round, r + 1);
  }
}

TEST(RunFederation, RidgeObjectiveNonIncreasingBelowInverseL) {
  const Dataset ds = generate_regression(200, 6, 0.5, 13);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 6, 0);
  const double lmax = symmetric_eigenvalues(ridge_hessian(ds, 0.0)).back();
  const RunHistory h =
      run_federation(ds, Dataset{}, single_device(ds, l), sgd(1.0 / lmax, 1, 60), 13);
  double prev = h.initial.train_loss;
  for (const auto& r : h.rounds) {
    // Once converged the loss only moves in the last bits.
    EXPECT_LE(r.train_loss, prev * (1 + 1e-14));
    prev = r.train_loss;
  }
}

TEST(RunFederation, DivergencePolicies) {
  const Dataset ds = generate_regression(60, 3, 0.3, 14);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 3, 0);
  const Topology topo = single_device(ds, l);
  const TrainConfig cfg = sgd(1e100, 3, 20);
  EXPECT_THROW(run_federation(ds, Dataset{}, topo, cfg, 14), DivergenceError);
  const RunHistory h = run_federation(ds, Dataset{}, topo, cfg, 14, DivergencePolicy::kStop);
  ASSERT_TRUE(h.diverged_at_round.has_value());
  EXPECT_EQ(h.rounds.size() + 1, *h.diverged_at_round);
  EXPECT_FALSE(h.divergence_message.empty());
}

TEST(TrainConfig, ValidationNamesField) {
  TrainConfig cfg;
  cfg.mu = -1.0;
  try {
    cfg.validate();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("train.mu"), std::string::npos);
  }
  cfg.mu = 0.1;
  cfg.t_local = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Evaluate, PerfectRidgeFit) {
  const Dataset ds = generate_regression(50, 3, 0.0, 15);
  const ModelLayout l = make_layout(ModelKind::kRidgeLinear, ds.task, 3, 0);
  Vector theta(4);
  for (std::size_t j = 0; j < 3; ++j) theta[j] = (*ds.w_true)[j];
  EXPECT_NEAR(evaluate({theta, l}, ds).loss, 0.0, 1e-28);
}

TEST(Evaluate, UniformBinaryIsLn2) {
  const Dataset ds = generate_classification(30, 2, 2, 1.0, 16);
  const ModelLayout l = make_layout(ModelKind::kLogistic, ds.task, 2, 2);
  const EvalResult r = evaluate(ModelParams::Zeros(l), ds);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  ASSERT_TRUE(r.accuracy.has_value());
}

TEST(Evaluate, EqualsUnregularizedObjective) {
  const Dataset ds = generate_classification(45, 4, 3, 1.0, 17);
  const ModelLayout l = make_layout(ModelKind::kMlp1, ds.task, 4, 3, 5);
  RngStream rng(17, 0);
  const ModelParams p{gaussian(rng, l.dim()), l};
  const auto fv = testing::full_view(ds, l);
  EXPECT_NEAR(evaluate(p, ds).loss, local_objective(p, fv.view(ds), 0.0).total, 1e-14);
  EXPECT_THROW(evaluate(p, Dataset{}), Error);
}

TEST(GradientVariance, IdenticalIsZero) {
  const std::vector<Vector> g(4, Vector{1.0, -2.0, 0.5});
  EXPECT_EQ(gradient_variance(g), 0.0);
}

TEST(GradientVariance, OppositePair) {
  const Vector g{3.0, 4.0};
  const std::vector<Vector> gs{g, -1.0 * g};
  EXPECT_NEAR(gradient_variance(gs), std::sqrt(2.0) * 5.0, 1e-14);
}

TEST(GradientVariance, ShiftInvariant) {
  RngStream rng(18, 0);
  std::vector<Vector> gs;
  for (int n = 0; n < 5; ++n) gs.push_back(gaussian(rng, 6));
  const Vector shift = gaussian(rng, 6);
  std::vector<Vector> shifted;
  for (const auto& g : gs) shifted.push_back(g + shift);
  EXPECT_NEAR(gradient_variance(gs), gradient_variance(shifted), 1e-12);
}

}  // namespace
}  // namespace hovefl
