#include "hovefl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "hovefl/error.hpp"

namespace hovefl {

Topology build_topology(const Dataset& train, const TopologySpec& spec,
                        const ModelLayout& layout, std::uint64_t seed) {
  if (spec.n_horizontal + spec.n_vertical == 0) {
    throw Error(ErrorCode::kInvalidArgument, "build_topology: need at least one device");
  }
  if (!(spec.pool_ratio > 0.0 && spec.pool_ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "build_topology: pool_ratio must be in (0, 1)");
  }
  if (layout.n_features != train.n_features()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "build_topology: layout and dataset feature counts differ");
  }

  std::vector<std::size_t> order(train.n_samples());
  std::iota(order.begin(), order.end(), 0);

  Topology topo;
  topo.n_horizontal = spec.n_horizontal;
  topo.n_vertical = spec.n_vertical;
  topo.layout = layout;

  if (spec.n_vertical == 0) {
    topo.horizontal_pool = order;
  } else if (spec.n_horizontal == 0) {
    topo.vertical_pool = order;
  } else {
    RngStream rng(seed, make_stream_id(StreamPurpose::kPoolSplit));
    shuffle(order, rng);
    const auto n_h = static_cast<std::size_t>(
        std::llround(spec.pool_ratio * static_cast<double>(order.size())));
    topo.horizontal_pool.assign(order.begin(), order.begin() + n_h);
    topo.vertical_pool.assign(order.begin() + n_h, order.end());
    std::sort(topo.horizontal_pool.begin(), topo.horizontal_pool.end());
    std::sort(topo.vertical_pool.begin(), topo.vertical_pool.end());
  }

  if (spec.n_horizontal > 0) {
    RngStream rng(seed, make_stream_id(StreamPurpose::kHorizontalPartition));
    auto shards = partition_horizontal(train, topo.horizontal_pool, spec.n_horizontal,
                                       spec.horizontal, rng);
    for (auto& s : shards) topo.shards.push_back(std::move(s));
  }
  if (spec.n_vertical > 0) {
    auto shards = partition_vertical(train, topo.vertical_pool, spec.n_vertical,
                                     spec.vertical);
    for (auto& s : shards) {
      s.device_id += static_cast<int>(spec.n_horizontal);
      topo.shards.push_back(std::move(s));
    }
  }
  for (const auto& s : topo.shards) {
    topo.masks.push_back(coordinate_mask(layout, s.feature_indices));
  }
  topo.validate(train);
  return topo;
}

void Topology::validate(const Dataset& ds) const {
  auto fail = [](ErrorCode code, const std::string& what) {
    throw Error(code, "topology: " + what);
  };
  if (n_horizontal + n_vertical != shards.size()) {
    fail(ErrorCode::kInvalidArgument, "device counts do not match shard list");
  }
  if (masks.size() != shards.size()) fail(ErrorCode::kInvalidArgument, "mask count mismatch");

  const std::vector<std::size_t>* vertical_samples = nullptr;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const DeviceShard& s = shards[i];
    const std::string who = "device " + std::to_string(s.device_id);
    if (s.sample_indices.empty() || s.feature_indices.empty()) {
      fail(ErrorCode::kInvalidArgument, who + " has an empty index set");
    }
    if (!std::is_sorted(s.sample_indices.begin(), s.sample_indices.end()) ||
        std::adjacent_find(s.sample_indices.begin(), s.sample_indices.end()) !=
            s.sample_indices.end() ||
        s.sample_indices.back() >= ds.n_samples()) {
      fail(ErrorCode::kInvalidArgument, who + " has invalid sample indices");
    }
    if (!std::is_sorted(s.feature_indices.begin(), s.feature_indices.end()) ||
        std::adjacent_find(s.feature_indices.begin(), s.feature_indices.end()) !=
            s.feature_indices.end() ||
        s.feature_indices.back() >= ds.n_features()) {
      fail(ErrorCode::kInvalidArgument, who + " has invalid feature indices");
    }
    if (masks[i] != coordinate_mask(layout, s.feature_indices)) {
      fail(ErrorCode::kInvalidArgument, who + " mask does not match its features");
    }
    if (s.role == DeviceRole::kHorizontal) {
      if (s.feature_indices.size() != ds.n_features()) {
        fail(ErrorCode::kInvalidArgument, who + " is horizontal but lacks features");
      }
    } else {
      if (vertical_samples && *vertical_samples != s.sample_indices) {
        fail(ErrorCode::kInvalidArgument, who + " does not share the vertical sample set");
      }
      vertical_samples = &s.sample_indices;
    }
  }

  for (std::size_t c = 0; c < layout.dim(); ++c) {
    bool covered = false;
    for (const auto& m : masks) covered = covered || m[c];
    if (!covered) {
      fail(ErrorCode::kCoverage, "coordinate " + std::to_string(c) + " (" +
                                     layout.describe(c) + ") is trained by no device");
    }
  }
}

std::string topology_to_json(const Topology& topology) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& s : topology.shards) {
    devices.push_back({{"device_id", s.device_id},
                       {"role", ToString(s.role)},
                       {"sample_count", s.sample_count()},
                       {"sample_indices", s.sample_indices},
                       {"feature_indices", s.feature_indices}});
  }
  nlohmann::json j;
  j["n_horizontal"] = topology.n_horizontal;
  j["n_vertical"] = topology.n_vertical;
  j["global_dim"] = topology.global_dim();
  j["model_kind"] = ToString(topology.layout.kind);
  j["devices"] = std::move(devices);
  return j.dump(2);
}

}  // namespace hovefl
