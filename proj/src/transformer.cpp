#include "stm/transformer.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "stm/errors.hpp"
#include "stm/kernels.hpp"

namespace stm {
namespace {

using healpix::Direction;

// GridSlot -> neighbor-table direction; the center slot is handled separately.
constexpr int kSlotDirection[9] = {
    static_cast<int>(Direction::NW), static_cast<int>(Direction::N),
    static_cast<int>(Direction::NE), static_cast<int>(Direction::W),
    -1,
    static_cast<int>(Direction::E),  static_cast<int>(Direction::SW),
    static_cast<int>(Direction::S),  static_cast<int>(Direction::SE)};

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " contains non-finite values");
  }
}

}  // namespace

template <typename T>
BasicSignal<T>::BasicSignal(healpix::Level lv, std::int64_t c)
    : level(lv), channels(c), data(static_cast<std::size_t>(lv.n_pixels() * c), T(0)) {
  if (c < 1) throw ContractError("signal needs at least one channel");
}

template <typename T>
BasicSignal<T>::BasicSignal(healpix::Level lv, std::int64_t c, std::vector<T> values)
    : level(lv), channels(c), data(std::move(values)) {
  validate();
}

template <typename T>
void BasicSignal<T>::validate() const {
  if (channels < 1) throw ContractError("signal needs at least one channel");
  if (static_cast<std::int64_t>(data.size()) != level.n_pixels() * channels) {
    throw ContractError("signal length " + std::to_string(data.size()) + " != " +
                        std::to_string(level.n_pixels()) + " pixels x " +
                        std::to_string(channels) + " channels");
  }
  check_finite(std::span<const T>(data), "signal");
}

TransformerGrid::TransformerGrid(const healpix::GridLevel& grid) : level_(grid.level()) {
  const std::int64_t n = grid.n_pix();
  rows_.resize(static_cast<std::size_t>(n * 9));
  for (std::int64_t p = 0; p < n; ++p) {
    const auto nb = grid.neighbors(p);
    for (int slot = 0; slot < 9; ++slot) {
      const int dir = kSlotDirection[slot];
      rows_[static_cast<std::size_t>(p * 9 + slot)] =
          dir < 0 ? static_cast<std::int32_t>(p) : nb[static_cast<std::size_t>(dir)];
    }
  }
}

std::shared_ptr<const TransformerGrid> TransformerGrid::get(healpix::Level level) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const TransformerGrid>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[level.value()];
  if (!slot) slot = std::make_shared<const TransformerGrid>(*healpix::GridLevel::get(level));
  return slot;
}

std::int64_t TransformerGrid::missing_entries() const {
  std::int64_t count = 0;
  for (const auto v : rows_) count += v < 0;
  return count;
}

template <typename T>
BasicPatchTensor<T> gather(const BasicSignal<T>& signal, const TransformerGrid& grid) {
  if (!(signal.level == grid.level())) throw ContractError("gather: signal and grid levels differ");
  BasicPatchTensor<T> out;
  out.level = signal.level;
  out.channels = signal.channels;
  out.data.resize(static_cast<std::size_t>(9 * signal.n_pix() * signal.channels));
  kernels::gather_forward<T>(signal.data, 1, signal.n_pix(), signal.channels, grid.rows(),
                             out.data);
  return out;
}

template <typename T>
BasicSignal<T> spherical_conv(const BasicSignal<T>& signal, const SphericalKernel<T>& kernel) {
  if (kernel.c_in != signal.channels) {
    throw ContractError("spherical_conv: kernel expects " + std::to_string(kernel.c_in) +
                        " input channels, signal has " + std::to_string(signal.channels));
  }
  if (static_cast<std::int64_t>(kernel.weights.size()) != 9 * kernel.c_in * kernel.c_out ||
      static_cast<std::int64_t>(kernel.bias.size()) != kernel.c_out) {
    throw ContractError("spherical_conv: malformed kernel");
  }
  check_finite(std::span<const T>(kernel.weights), "kernel weights");
  check_finite(std::span<const T>(kernel.bias), "kernel bias");

  const auto grid = TransformerGrid::get(signal.level);
  const BasicPatchTensor<T> patches = gather(signal, *grid);

  kernels::Conv2dDims d;
  d.height = 3;
  d.width = 3 * signal.n_pix();
  d.cin = signal.channels;
  d.cout = kernel.c_out;
  d.stride_w = 3;
  BasicSignal<T> out(signal.level, kernel.c_out);
  kernels::conv2d_forward<T>(patches.data, kernel.weights, kernel.bias, d, out.data);
  return out;
}

template <typename T>
PoolResult<T> spherical_pool(const BasicSignal<T>& signal) {
  if (signal.level.value() == 0) throw DomainError("spherical_pool: level 0 cannot be pooled");
  PoolResult<T> r{BasicSignal<T>(signal.level.coarser(), signal.channels), {}};
  r.argmax.resize(r.signal.data.size());
  kernels::maxpool4_forward<T>(signal.data, 1, r.signal.n_pix(), signal.channels, r.signal.data,
                               r.argmax);
  return r;
}

template <typename T>
BasicSignal<T> spherical_unpool_conv(const BasicSignal<T>& signal, const UnpoolKernel<T>& kernel) {
  if (kernel.c_in != signal.channels) throw ContractError("spherical_unpool_conv: channel mismatch");
  if (static_cast<std::int64_t>(kernel.weights.size()) != 4 * kernel.c_in * kernel.c_out ||
      static_cast<std::int64_t>(kernel.bias.size()) != kernel.c_out) {
    throw ContractError("spherical_unpool_conv: malformed kernel");
  }
  BasicSignal<T> out(signal.level.finer(), kernel.c_out);
  // [n, c_in] x [c_in, 4 c_out] lays the children out contiguously.
  kernels::matmul_forward<T>(signal.data, kernel.weights, {}, signal.n_pix(), kernel.c_in,
                             4 * kernel.c_out, out.data);
  for (std::int64_t p = 0; p < out.n_pix(); ++p) {
    for (std::int64_t co = 0; co < kernel.c_out; ++co) out.at(p, co) += kernel.bias[static_cast<std::size_t>(co)];
  }
  return out;
}

template <typename T>
BasicSignal<T> permute_pixels(const BasicSignal<T>& signal, std::span<const std::int32_t> perm) {
  if (static_cast<std::int64_t>(perm.size()) != signal.n_pix()) {
    throw ContractError("permute_pixels: permutation size mismatch");
  }
  BasicSignal<T> out(signal.level, signal.channels);
  for (std::int64_t p = 0; p < signal.n_pix(); ++p) {
    const auto src = signal.pixel(p);
    std::copy(src.begin(), src.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(perm[static_cast<std::size_t>(p)] * signal.channels));
  }
  return out;
}

#define STM_INSTANTIATE_TRANSFORMER(T)                                                            \
  template struct BasicSignal<T>;                                                                 \
  template BasicPatchTensor<T> gather<T>(const BasicSignal<T>&, const TransformerGrid&);          \
  template BasicSignal<T> spherical_conv<T>(const BasicSignal<T>&, const SphericalKernel<T>&);    \
  template PoolResult<T> spherical_pool<T>(const BasicSignal<T>&);                                \
  template BasicSignal<T> spherical_unpool_conv<T>(const BasicSignal<T>&, const UnpoolKernel<T>&); \
  template BasicSignal<T> permute_pixels<T>(const BasicSignal<T>&, std::span<const std::int32_t>);

STM_INSTANTIATE_TRANSFORMER(float)
STM_INSTANTIATE_TRANSFORMER(double)

}  // namespace stm
