#include "hovefl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hovefl/error.hpp"

namespace hovefl {

const char* ToString(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRegression: return "regression";
    case TaskKind::kBinaryClassification: return "binary_classification";
    case TaskKind::kMulticlass: return "multiclass";
  }
  return "unknown";
}

TaskKind ParseTaskKind(const std::string& name) {
  if (name == "regression") return TaskKind::kRegression;
  if (name == "binary_classification" || name == "binary") {
    return TaskKind::kBinaryClassification;
  }
  if (name == "multiclass") return TaskKind::kMulticlass;
  throw Error(ErrorCode::kInvalidArgument, "unknown task kind '" + name + "'");
}

const char* ToString(DeviceRole role) {
  return role == DeviceRole::kHorizontal ? "horizontal" : "vertical";
}

void Dataset::validate() const {
  const std::size_t n = x.rows();
  if (y.dim() != n || sample_ids.size() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "Dataset: row count, label count and sample id count differ");
  }
  if (feature_ids.size() != x.cols()) {
    throw Error(ErrorCode::kInvalidArgument,
                "Dataset: feature id count differs from column count");
  }
  if (!all_finite(x.values()) || !all_finite(y)) {
    throw Error(ErrorCode::kNonFinite, "Dataset: non-finite entry");
  }
  if (is_classification(task)) {
    if (n_classes < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "Dataset: classification needs at least 2 classes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double label = y[i];
      if (label != std::floor(label) || label < 0 ||
          label >= static_cast<double>(n_classes)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "Dataset: label " + std::to_string(label) + " at row " +
                        std::to_string(i) + " outside [0, " +
                        std::to_string(n_classes) + ")");
      }
    }
  }
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.task = ds.task;
  out.n_classes = ds.n_classes;
  out.w_true = ds.w_true;
  out.feature_ids = ds.feature_ids;
  out.x = Matrix(indices.size(), ds.n_features());
  out.y = Vector(indices.size());
  out.sample_ids.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= ds.n_samples()) {
      throw Error(ErrorCode::kInvalidArgument, "subset: row index out of range");
    }
    std::copy(ds.x.row(src).begin(), ds.x.row(src).end(), out.x.row(r).begin());
    out.y[r] = ds.y[src];
    out.sample_ids.push_back(ds.sample_ids[src]);
  }
  return out;
}

TrainTestSplit split_train_test(const Dataset& ds, double test_fraction,
                                std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "test_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> order(ds.n_samples());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, make_stream_id(StreamPurpose::kTrainTestSplit));
  shuffle(order, rng);
  const auto n_test = static_cast<std::size_t>(
      std::floor(test_fraction * static_cast<double>(ds.n_samples())));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {subset(ds, train), subset(ds, test)};
}

namespace {

std::vector<std::string> numbered_ids(const char* prefix, std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

}  // namespace

Dataset generate_regression(std::size_t n_samples, std::size_t n_features,
                            double noise_std, std::uint64_t seed) {
  if (n_samples == 0 || n_features == 0 || !(noise_std >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "generate_regression: need n_samples, n_features >= 1 and noise_std >= 0");
  }
  RngStream rng(seed, make_stream_id(StreamPurpose::kDataGeneration, 0));
  Dataset ds;
  ds.task = TaskKind::kRegression;
  ds.w_true = gaussian(rng, n_features);
  ds.x = Matrix(n_samples, n_features);
  ds.y = Vector(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    auto row = ds.x.row(i);
    for (auto& v : row) v = rng.normal();
    ds.y[i] = dot(row, ds.w_true->span()) + noise_std * rng.normal();
  }
  ds.sample_ids = numbered_ids("s", n_samples);
  ds.feature_ids = numbered_ids("f", n_features);
  return ds;
}

Dataset generate_classification(std::size_t n_samples, std::size_t n_features,
                                std::size_t n_classes, double cluster_sep,
                                std::uint64_t seed) {
  if (n_samples == 0 || n_features == 0 || n_classes < 2 || !(cluster_sep > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "generate_classification: need n_samples, n_features >= 1, "
                "n_classes >= 2 and cluster_sep > 0");
  }
  RngStream rng(seed, make_stream_id(StreamPurpose::kDataGeneration, 1));

  std::vector<Vector> means;
  means.reserve(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) means.push_back(gaussian(rng, n_features));
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n_classes; ++a) {
    for (std::size_t b = a + 1; b < n_classes; ++b) {
      min_dist = std::min(min_dist, norm(means[a] - means[b]));
    }
  }
  if (!(min_dist > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "generate_classification: coincident class means");
  }
  const double scale = cluster_sep / min_dist;
  for (auto& m : means) m = scale * m;

  std::vector<std::size_t> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = i % n_classes;
  shuffle(labels, rng);

  Dataset ds;
  ds.task = n_classes == 2 ? TaskKind::kBinaryClassification : TaskKind::kMulticlass;
  ds.n_classes = n_classes;
  ds.x = Matrix(n_samples, n_features);
  ds.y = Vector(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Vector& mean = means[labels[i]];
    auto row = ds.x.row(i);
    for (std::size_t j = 0; j < n_features; ++j) row[j] = mean[j] + rng.normal();
    ds.y[i] = static_cast<double>(labels[i]);
  }
  ds.sample_ids = numbered_ids("s", n_samples);
  ds.feature_ids = numbered_ids("f", n_features);
  return ds;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no,
                  const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorCode::kParse, "load_csv: non-numeric cell '" + cell +
                                       "' at line " + std::to_string(line_no) +
                                       ", column '" + column + "'");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "load_csv: cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw Error(ErrorCode::kEmptyDataset, "load_csv: empty file " + path.string());
  }
  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column_of.emplace(header[c], c).second) {
      throw Error(ErrorCode::kParse, "load_csv: duplicate column '" + header[c] + "'");
    }
  }
  auto require_column = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw Error(ErrorCode::kParse, "load_csv: missing column '" + name + "'");
    }
    return it->second;
  };

  const std::size_t label_col = require_column(schema.label_column);
  std::optional<std::size_t> id_col;
  if (schema.id_column) id_col = require_column(*schema.id_column);

  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != label_col && (!id_col || c != *id_col)) feature_names.push_back(header[c]);
    }
  }
  if (feature_names.empty()) {
    throw Error(ErrorCode::kParse, "load_csv: no feature columns");
  }
  std::vector<std::size_t> feature_cols;
  for (const auto& name : feature_names) feature_cols.push_back(require_column(name));

  std::vector<double> values;
  std::vector<double> labels;
  std::vector<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParse, "load_csv: line " + std::to_string(line_no) +
                                         " has " + std::to_string(cells.size()) +
                                         " cells, expected " +
                                         std::to_string(header.size()));
    }
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      values.push_back(parse_cell(cells[feature_cols[k]], line_no, feature_names[k]));
    }
    labels.push_back(parse_cell(cells[label_col], line_no, schema.label_column));
    ids.push_back(id_col ? cells[*id_col] : "s" + std::to_string(ids.size()));
  }
  if (labels.empty()) {
    throw Error(ErrorCode::kEmptyDataset,
                "load_csv: empty dataset (no data rows) in " + path.string());
  }

  Dataset ds;
  ds.task = schema.task;
  ds.x = Matrix(labels.size(), feature_cols.size(), std::move(values));
  ds.y = Vector(std::move(labels));
  ds.sample_ids = std::move(ids);
  ds.feature_ids = std::move(feature_names);
  if (is_classification(ds.task)) {
    double max_label = 0.0;
    for (double v : ds.y) max_label = std::max(max_label, v);
    ds.n_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    if (ds.task == TaskKind::kBinaryClassification && ds.n_classes != 2) {
      throw Error(ErrorCode::kParse,
                  "load_csv: binary task but labels exceed {0, 1}");
    }
  }
  std::set<std::string> unique_ids(ds.sample_ids.begin(), ds.sample_ids.end());
  if (unique_ids.size() != ds.sample_ids.size()) {
    throw Error(ErrorCode::kParse, "load_csv: duplicate sample ids");
  }
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "write_csv: cannot open " + path.string());
  for (const auto& f : ds.feature_ids) out << f << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    for (double v : ds.x.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", ds.y[i]);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::kIo, "write_csv: write failed for " + path.string());
}

namespace {

// Largest-remainder split of `total` items by `proportions`.
std::vector<std::size_t> apportion(std::size_t total,
                                   const std::vector<double>& proportions) {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t d = 0; d < k; ++d) {
    const double exact = proportions[d] * static_cast<double>(total);
    counts[d] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[d];
    remainders.emplace_back(exact - std::floor(exact), d);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % k].second];
  }
  return counts;
}

}  // namespace

std::vector<DeviceShard> partition_horizontal(const Dataset& ds,
                                              const std::vector<std::size_t>& pool,
                                              std::size_t n_devices,
                                              const HorizontalParams& params,
                                              RngStream& rng) {
  if (n_devices == 0) {
    throw Error(ErrorCode::kInvalidArgument, "partition_horizontal: n_devices must be >= 1");
  }
  if (!(params.dirichlet_beta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "partition_horizontal: dirichlet_beta must be > 0");
  }
  if (params.min_per_device == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "partition_horizontal: min_per_device must be >= 1");
  }
  if (n_devices * params.min_per_device > pool.size()) {
    throw Error(ErrorCode::kInfeasiblePartition,
                "partition_horizontal: " + std::to_string(n_devices) + " devices x " +
                    std::to_string(params.min_per_device) + " samples exceeds pool of " +
                    std::to_string(pool.size()));
  }

  // Group pool rows by class (or by target quantile bin for regression).
  std::vector<std::vector<std::size_t>> groups;
  if (is_classification(ds.task)) {
    groups.resize(ds.n_classes);
    for (std::size_t idx : pool) groups[static_cast<std::size_t>(ds.y[idx])].push_back(idx);
  } else {
    std::vector<std::size_t> by_target = pool;
    std::stable_sort(by_target.begin(), by_target.end(),
                     [&](std::size_t a, std::size_t b) { return ds.y[a] < ds.y[b]; });
    groups.resize(n_devices);
    for (std::size_t r = 0; r < by_target.size(); ++r) {
      groups[r * n_devices / by_target.size()].push_back(by_target[r]);
    }
  }

  std::vector<std::vector<std::size_t>> assigned(n_devices);
  for (auto& group : groups) {
    if (group.empty()) continue;
    shuffle(group, rng);
    const auto proportions = dirichlet(rng, n_devices, params.dirichlet_beta);
    const auto counts = apportion(group.size(), proportions);
    std::size_t cursor = 0;
    for (std::size_t d = 0; d < n_devices; ++d) {
      for (std::size_t c = 0; c < counts[d]; ++c) assigned[d].push_back(group[cursor++]);
    }
  }

  // Top up small shards from the currently largest one.
  for (;;) {
    auto smallest = std::min_element(assigned.begin(), assigned.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (smallest->size() >= params.min_per_device) break;
    auto largest = std::max_element(assigned.begin(), assigned.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    smallest->push_back(largest->back());
    largest->pop_back();
  }

  std::vector<std::size_t> all_features(ds.n_features());
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<DeviceShard> shards(n_devices);
  for (std::size_t d = 0; d < n_devices; ++d) {
    shards[d].device_id = static_cast<int>(d);
    shards[d].role = DeviceRole::kHorizontal;
    shards[d].sample_indices = std::move(assigned[d]);
    std::sort(shards[d].sample_indices.begin(), shards[d].sample_indices.end());
    shards[d].feature_indices = all_features;
  }
  return shards;
}

std::vector<DeviceShard> partition_vertical(const Dataset& ds,
                                            const std::vector<std::size_t>& pool,
                                            std::size_t n_devices,
                                            const VerticalParams& params) {
  const std::size_t n_features = ds.n_features();
  if (n_devices == 0) {
    throw Error(ErrorCode::kInvalidArgument, "partition_vertical: n_devices must be >= 1");
  }
  if (!(params.overlap_fraction >= 0.0 && params.overlap_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "partition_vertical: overlap_fraction must be in [0, 1)");
  }
  if (n_features < n_devices) {
    throw Error(ErrorCode::kInfeasiblePartition,
                "partition_vertical: " + std::to_string(n_features) +
                    " features cannot be split across " + std::to_string(n_devices) +
                    " devices");
  }
  if (pool.empty()) {
    throw Error(ErrorCode::kInfeasiblePartition, "partition_vertical: empty sample pool");
  }

  std::vector<std::size_t> samples = pool;
  std::sort(samples.begin(), samples.end());

  std::vector<DeviceShard> shards(n_devices);
  std::size_t start = 0;
  for (std::size_t d = 0; d < n_devices; ++d) {
    const std::size_t block = n_features / n_devices + (d < n_features % n_devices ? 1 : 0);
    // The epsilon keeps products like 0.2 * 5 from flooring to 0.
    auto borrowed = static_cast<std::size_t>(
        std::floor(params.overlap_fraction * static_cast<double>(block) + 1e-9));
    borrowed = std::min(borrowed, n_features - block);

    std::vector<std::size_t> features;
    for (std::size_t k = 0; k < block + borrowed; ++k) {
      features.push_back((start + k) % n_features);
    }
    std::sort(features.begin(), features.end());

    shards[d].device_id = static_cast<int>(d);
    shards[d].role = DeviceRole::kVertical;
    shards[d].sample_indices = samples;
    shards[d].feature_indices = std::move(features);
    start += block;
  }
  return shards;
}

}  // namespace hovefl
