#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hovefl/data.hpp"
#include "hovefl/models.hpp"

namespace hovefl {

struct TopologySpec {
  std::size_t n_horizontal = 0;
  std::size_t n_vertical = 0;
  HorizontalParams horizontal;
  VerticalParams vertical;
  // Fraction of training rows in the horizontal pool when both groups exist.
  double pool_ratio = 0.5;
};

// Horizontal devices get ids [0, n_horizontal), vertical devices follow.
struct Topology {
  std::vector<DeviceShard> shards;
  std::size_t n_horizontal = 0;
  std::size_t n_vertical = 0;
  ModelLayout layout;
  // One mask per shard, same order.
  std::vector<CoordinateMask> masks;
  std::vector<std::size_t> horizontal_pool;
  std::vector<std::size_t> vertical_pool;

  std::size_t global_dim() const noexcept { return layout.dim(); }
  std::size_t n_devices() const noexcept { return shards.size(); }

  SampleView view(const Dataset& ds, std::size_t shard) const {
    return {&ds, shards[shard].sample_indices, shards[shard].feature_indices,
            masks[shard]};
  }

  // Checks every structural invariant; throws kCoverage or
  // kInvalidArgument with a description of the first violation.
  void validate(const Dataset& ds) const;
};

Topology build_topology(const Dataset& train, const TopologySpec& spec,
                        const ModelLayout& layout, std::uint64_t seed);

// {"devices":[{"device_id":..,"role":..,"sample_indices":[..],
//  "feature_indices":[..]}], ...}
std::string topology_to_json(const Topology& topology);

}  // namespace hovefl
