#pragma once

// Counter-based random streams (Philox4x32-10). Stream i of a run is a pure
// function of (seed, i), so per-path draws do not depend on thread scheduling.

#include <array>
#include <cstdint>

namespace cbi {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_index);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // uniform on (0, 1), never 0 or 1
  double uniform();
  double normal();
  double exponential();
  // Gamma(shape, 1)
  double gamma(double shape);
  std::uint64_t poisson(double mean);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_index() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_, stream_;
  PhiloxKey key_;
  std::uint64_t block_ = 0;
  PhiloxCounter buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Convenience for the stream API.
inline RngStream rng_stream(std::uint64_t seed, std::uint64_t stream_index) { return RngStream(seed, stream_index); }

}  // namespace cbi
