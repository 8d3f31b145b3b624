#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hovefl/numerics.hpp"
#include "hovefl/rng.hpp"

namespace hovefl {

enum class TaskKind { kRegression, kBinaryClassification, kMulticlass };

const char* ToString(TaskKind kind);
TaskKind ParseTaskKind(const std::string& name);

inline bool is_classification(TaskKind kind) {
  return kind != TaskKind::kRegression;
}

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> sample_ids;
  std::vector<std::string> feature_ids;
  TaskKind task = TaskKind::kRegression;
  // Number of label values for classification tasks; 0 for regression.
  std::size_t n_classes = 0;
  // Ground-truth coefficients for generated regression data.
  std::optional<Vector> w_true;

  std::size_t n_samples() const noexcept { return x.rows(); }
  std::size_t n_features() const noexcept { return x.cols(); }

  // Throws kInvalidArgument when shapes or labels are inconsistent.
  void validate() const;
};

// Rows of `ds` selected by `indices`, in that order.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Shuffled holdout split; test_fraction in [0, 1).
TrainTestSplit split_train_test(const Dataset& ds, double test_fraction,
                                std::uint64_t seed);

Dataset generate_regression(std::size_t n_samples, std::size_t n_features,
                            double noise_std, std::uint64_t seed);

// Gaussian clusters (unit covariance) around class means whose minimum
// pairwise distance equals `cluster_sep`. Labels cycle through the classes
// before shuffling, so counts differ by at most one.
Dataset generate_classification(std::size_t n_samples, std::size_t n_features,
                                std::size_t n_classes, double cluster_sep,
                                std::uint64_t seed);

struct CsvSchema {
  // Empty means every column except the label column, in file order.
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  TaskKind task = TaskKind::kRegression;
  // Optional column holding sample identifiers.
  std::optional<std::string> id_column;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Writes `ds` with a header row and label column "label". Values are printed
// with 17 significant digits so that load_csv recovers them exactly.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

enum class DeviceRole { kHorizontal, kVertical };
const char* ToString(DeviceRole role);

struct DeviceShard {
  int device_id = 0;
  DeviceRole role = DeviceRole::kHorizontal;
  // Sorted, unique row indices into the training Dataset.
  std::vector<std::size_t> sample_indices;
  // Sorted, unique column indices into the training Dataset.
  std::vector<std::size_t> feature_indices;

  std::size_t sample_count() const noexcept { return sample_indices.size(); }
};

struct HorizontalParams {
  double dirichlet_beta = 0.5;
  std::size_t min_per_device = 1;
};

struct VerticalParams {
  double overlap_fraction = 0.0;
};

// Splits `pool` (row indices of `ds`) across devices with Dirichlet label
// skew. For each class c, the pool's class-c rows are divided among devices
// with proportions p_c ~ Dir(beta). Regression targets are bucketed into
// n_devices quantile bins that play the role of classes.
std::vector<DeviceShard> partition_horizontal(const Dataset& ds,
                                              const std::vector<std::size_t>& pool,
                                              std::size_t n_devices,
                                              const HorizontalParams& params,
                                              RngStream& rng);

inline std::vector<DeviceShard> partition_horizontal(const Dataset& ds,
                                                     std::size_t n_devices,
                                                     const HorizontalParams& params,
                                                     RngStream& rng) {
  std::vector<std::size_t> all(ds.n_samples());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return partition_horizontal(ds, all, n_devices, params, rng);
}

// Contiguous near-equal feature blocks, each extended cyclically by
// floor(overlap_fraction * block_size) features of the following block.
// Every shard receives the whole `pool`. The layout is a pure function of
// its arguments, so no random stream is needed.
std::vector<DeviceShard> partition_vertical(const Dataset& ds,
                                            const std::vector<std::size_t>& pool,
                                            std::size_t n_devices,
                                            const VerticalParams& params);

inline std::vector<DeviceShard> partition_vertical(const Dataset& ds,
                                                   std::size_t n_devices,
                                                   const VerticalParams& params) {
  std::vector<std::size_t> all(ds.n_samples());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return partition_vertical(ds, all, n_devices, params);
}

}  // namespace hovefl
