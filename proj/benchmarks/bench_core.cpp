#include <algorithm>
#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "hovefl/federation.hpp"

namespace hovefl {
namespace {

Dataset bench_data(ModelKind kind, std::size_t n, std::size_t d) {
  if (kind == ModelKind::kRidgeLinear) return generate_regression(n, d, 0.5, 1);
  return generate_classification(n, d, 4, 2.0, 1);
}

void BM_LocalGradient(benchmark::State& state) {
  const auto kind = static_cast<ModelKind>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const Dataset ds = bench_data(kind, n, 24);
  const ModelLayout l = make_layout(kind, ds.task, 24, ds.n_classes, 16);
  std::vector<std::size_t> rows(n), features(24);
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(features.begin(), features.end(), 0);
  const CoordinateMask mask = full_mask(l);
  RngStream rng(1, 1);
  const ModelParams p{gaussian(rng, l.dim()), l};
  const SampleView view{&ds, rows, features, mask};
  for (auto _ : state) benchmark::DoNotOptimize(local_gradient(p, view, 0.01));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
  state.SetLabel(ToString(kind));
}
BENCHMARK(BM_LocalGradient)
    ->ArgsProduct({{0, 1, 2}, {256, 2048}})
    ->Unit(benchmark::kMicrosecond);

void BM_Aggregate(benchmark::State& state) {
  const auto devices = static_cast<std::size_t>(state.range(0));
  const Dataset ds = bench_data(ModelKind::kLogistic, 4000, 24);
  const ModelLayout l = make_layout(ModelKind::kLogistic, ds.task, 24, 4);
  TopologySpec spec;
  // Vertical devices need at least one feature each.
  spec.n_vertical = std::min<std::size_t>(devices / 3, 24);
  spec.n_horizontal = devices - spec.n_vertical;
  const Topology topo = build_topology(ds, spec, l, 1);
  RngStream rng(2, 2);
  std::vector<LocalUpdate> updates;
  for (std::size_t n = 0; n < topo.n_devices(); ++n) {
    updates.push_back({topo.shards[n].device_id, {gaussian(rng, l.dim()), l}, topo.masks[n],
                       topo.shards[n].sample_count(), {}});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate(updates, topo, WeightScheme::kSampleProportional));
  }
}
BENCHMARK(BM_Aggregate)->Arg(6)->Arg(18)->Arg(40);

void BM_RunRound(benchmark::State& state) {
  const Dataset all = bench_data(ModelKind::kLogistic, 3000, 24);
  const TrainTestSplit split = split_train_test(all, 0.25, 1);
  const ModelLayout l = make_layout(ModelKind::kLogistic, all.task, 24, 4);
  TopologySpec spec;
  spec.n_horizontal = 12;
  spec.n_vertical = 6;
  spec.horizontal.dirichlet_beta = 0.1;
  spec.horizontal.min_per_device = 10;
  const Topology topo = build_topology(split.train, spec, l, 1);
  TrainConfig cfg;
  cfg.mu = 0.02;
  cfg.t_local = 10;
  cfg.rounds = 1;
  cfg.alpha = 0.01;
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.batch_size = 32;
  cfg.track_diagnostics = state.range(0) != 0;
  Federation fed(split.train, split.test, topo, cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fed.run_round());
  state.SetLabel(cfg.track_diagnostics ? "with diagnostics" : "no diagnostics");
}
BENCHMARK(BM_RunRound)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace hovefl

BENCHMARK_MAIN();
