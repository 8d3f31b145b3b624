#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hovefl/analysis.hpp"
#include "hovefl/data.hpp"
#include "hovefl/federation.hpp"
#include "hovefl/models.hpp"
#include "hovefl/numerics.hpp"
#include "hovefl/rng.hpp"
#include "hovefl/topology.hpp"

namespace hovefl::testing {

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(norm(a), norm(b));
  if (scale == 0.0) return 0.0;
  return norm(a - b) / scale;
}

inline Dataset dataset_for(ModelKind kind, std::size_t n, std::size_t d, std::size_t classes,
                           std::uint64_t seed) {
  if (kind == ModelKind::kRidgeLinear) return generate_regression(n, d, 0.3, seed);
  return generate_classification(n, d, classes, 1.5, seed);
}

// Owns the index storage a SampleView points into.
struct FullView {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> features;
  CoordinateMask mask;
  SampleView view(const Dataset& ds) const { return {&ds, rows, features, mask}; }
};

inline FullView full_view(const Dataset& ds, const ModelLayout& layout) {
  return {iota_indices(ds.n_samples()), iota_indices(ds.n_features()), full_mask(layout)};
}

struct GradientCheck {
  double worst_relative_error = 0.0;
  std::size_t points = 0;
};

// Analytic vs central-difference gradients of the regularized objective at
// `points` random (params, data, alpha) draws for one model kind.
inline GradientCheck check_gradients(ModelKind kind, std::size_t points, std::uint64_t seed) {
  GradientCheck out;
  RngStream rng(seed, 0xC0FFEE);
  for (std::size_t p = 0; p < points; ++p) {
    const std::size_t d = 2 + rng.below(5);
    const std::size_t classes = kind == ModelKind::kRidgeLinear ? 0 : 2 + rng.below(3);
    const std::size_t n = 5 + rng.below(20);
    const Dataset ds = dataset_for(kind, n, d, classes, seed * 1000 + p);
    const ModelLayout layout = make_layout(kind, ds.task, d, ds.n_classes, 3 + rng.below(4));
    ModelParams params{gaussian(rng, layout.dim()), layout};
    const double alpha = rng.uniform();
    const FullView fv = full_view(ds, layout);
    const SampleView view = fv.view(ds);
    const Vector analytic = local_gradient(params, view, alpha);
    const Vector numeric = finite_diff_gradient(
        [&](const Vector& theta) {
          return local_objective(ModelParams{theta, layout}, view, alpha).total;
        },
        params.theta);
    out.worst_relative_error = std::max(out.worst_relative_error, relative_error(analytic, numeric));
    ++out.points;
  }
  return out;
}

// Hand-assembled topology that skips the partitioners.
inline Topology manual_topology(const ModelLayout& layout, std::vector<DeviceShard> shards,
                                std::size_t n_horizontal) {
  Topology t;
  t.layout = layout;
  t.n_horizontal = n_horizontal;
  t.n_vertical = shards.size() - n_horizontal;
  for (const auto& s : shards) {
    t.masks.push_back(coordinate_mask(layout, s.feature_indices));
    if (s.role == DeviceRole::kHorizontal) {
      t.horizontal_pool.insert(t.horizontal_pool.end(), s.sample_indices.begin(),
                               s.sample_indices.end());
    } else if (t.vertical_pool.empty()) {
      t.vertical_pool = s.sample_indices;
    }
  }
  std::sort(t.horizontal_pool.begin(), t.horizontal_pool.end());
  t.shards = std::move(shards);
  return t;
}

inline DeviceShard shard(int id, DeviceRole role, std::vector<std::size_t> rows,
                         std::vector<std::size_t> features) {
  return {id, role, std::move(rows), std::move(features)};
}

// Rows of `ds` repeated `copies` times; copy k occupies rows [k n, (k+1) n).
inline Dataset repeat_rows(const Dataset& ds, std::size_t copies) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < copies; ++k) {
    for (std::size_t i = 0; i < ds.n_samples(); ++i) idx.push_back(i);
  }
  Dataset out = subset(ds, idx);
  for (std::size_t i = 0; i < out.sample_ids.size(); ++i) {
    out.sample_ids[i] = "r" + std::to_string(i);
  }
  return out;
}

}  // namespace hovefl::testing
