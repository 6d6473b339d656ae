#pragma once

// Micro-benchmark of one spherical convolution layer: gather, then the 3x3 stride-1x3 conv.

#include <cstdint>

#include "stm/healpix.hpp"

namespace stm::bench {

struct GatherReport {
  int level = 0;
  std::int64_t pixels = 0;
  std::int64_t channels = 0;
  int iterations = 0;
  double gather_seconds = 0.0;  // per iteration
  double conv_seconds = 0.0;    // per iteration
  double pixels_per_second = 0.0;
  std::int64_t bytes_moved = 0;  // gather traffic over all iterations: valid reads + patch writes
  double checksum = 0.0;         // sum of the last conv output
};

// Channels in and out are equal. Throws ConfigError when iterations or channels < 1.
GatherReport bench_gather(healpix::Level level, std::int64_t channels, int iterations, std::uint64_t seed = 42);

}  // namespace stm::bench
