#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "hovefl/numerics.hpp"

namespace hovefl {

// Counter-based stream built on Philox4x32-10. The key is the seed and the
// upper half of the counter is the stream id, so (seed, stream_id) fully
// determines the sequence and distinct stream ids never overlap.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1).
  double uniform_open();
  double normal();
  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the boost trick.
  double gamma(double shape);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Child stream whose id mixes this stream's id with `tag`.
  RngStream split(std::uint64_t tag) const;

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  std::size_t buffered_ = 0;
  std::optional<double> spare_normal_;
};

// Raw Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Stream ids for the simulator's random purposes. Packing the purpose into
// the high bits keeps e.g. device 3's round-5 minibatch stream distinct from
// any partitioner stream.
enum class StreamPurpose : std::uint64_t {
  kDataGeneration = 1,
  kTrainTestSplit = 2,
  kPoolSplit = 3,
  kHorizontalPartition = 4,
  kVerticalPartition = 5,
  kInit = 6,
  kLocalTraining = 7,
  kProbes = 8,
};

std::uint64_t make_stream_id(StreamPurpose purpose, std::uint64_t a = 0,
                             std::uint64_t b = 0);

Vector gaussian(RngStream& rng, std::size_t n);
std::vector<double> dirichlet(RngStream& rng, std::size_t k, double concentration);

// Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace hovefl
