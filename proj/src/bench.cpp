#include "stm/bench.hpp"

#include <chrono>
#include <random>
#include <vector>

#include "stm/errors.hpp"
#include "stm/kernels.hpp"
#include "stm/transformer.hpp"

namespace stm::bench {

GatherReport bench_gather(healpix::Level level, std::int64_t channels, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (channels < 1) throw ConfigError("channels must be at least 1");
  const auto grid = TransformerGrid::get(level);
  const std::int64_t n = grid->n_pix();
  const std::int64_t c = channels;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> x(static_cast<std::size_t>(n * c));
  std::vector<float> w(static_cast<std::size_t>(9 * c * c));
  std::vector<float> b(static_cast<std::size_t>(c));
  for (auto& v : x) v = u(rng);
  for (auto& v : w) v = u(rng) / static_cast<float>(3 * c);
  for (auto& v : b) v = u(rng);
  std::vector<float> patches(static_cast<std::size_t>(9 * n * c));
  std::vector<float> out(static_cast<std::size_t>(n * c));

  kernels::Conv2dDims d;
  d.height = 3;
  d.width = 3 * n;
  d.cin = c;
  d.cout = c;
  d.stride_w = 3;

  using clock = std::chrono::steady_clock;
  double t_gather = 0.0, t_conv = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const auto t0 = clock::now();
    kernels::gather_forward<float>(x, 1, n, c, grid->rows(), patches);
    const auto t1 = clock::now();
    kernels::conv2d_forward<float>(patches, w, b, d, out);
    const auto t2 = clock::now();
    t_gather += std::chrono::duration<double>(t1 - t0).count();
    t_conv += std::chrono::duration<double>(t2 - t1).count();
  }

  GatherReport r;
  r.level = level.value();
  r.pixels = n;
  r.channels = c;
  r.iterations = iterations;
  r.gather_seconds = t_gather / iterations;
  r.conv_seconds = t_conv / iterations;
  const double total = t_gather + t_conv;
  r.pixels_per_second = total > 0.0 ? static_cast<double>(n) * iterations / total : 0.0;
  const std::int64_t valid = 9 * n - grid->missing_entries();
  r.bytes_moved = (valid + 9 * n) * c * static_cast<std::int64_t>(sizeof(float)) * iterations;
  for (const float v : out) r.checksum += v;
  return r;
}

}  // namespace stm::bench
