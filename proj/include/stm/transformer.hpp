#pragma once

// The spherical transformer: per-pixel 3x3 index grids over the HEALPix
// neighbor graph, the gather that turns a spherical signal into a
// convolution-ready 3 x 3n patch image, and pooling along the nested axis.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "stm/healpix.hpp"

namespace stm {

// C-channel field over the pixels of one level, pixel-major, nested order.
template <typename T>
struct BasicSignal {
  healpix::Level level{0};
  std::int64_t channels = 1;
  std::vector<T> data;

  BasicSignal() = default;
  BasicSignal(healpix::Level lv, std::int64_t c);
  BasicSignal(healpix::Level lv, std::int64_t c, std::vector<T> values);

  std::int64_t n_pix() const { return level.n_pixels(); }
  T& at(std::int64_t pix, std::int64_t ch) { return data[static_cast<std::size_t>(pix * channels + ch)]; }
  T at(std::int64_t pix, std::int64_t ch) const {
    return data[static_cast<std::size_t>(pix * channels + ch)];
  }
  std::span<const T> pixel(std::int64_t pix) const {
    return std::span<const T>(data).subspan(static_cast<std::size_t>(pix * channels),
                                            static_cast<std::size_t>(channels));
  }

  // Throws ContractError on a length mismatch and NumericError on non-finite values.
  void validate() const;
};

using SphericalSignal = BasicSignal<float>;
using SphericalSignal64 = BasicSignal<double>;

// Slot order inside a 3x3 row: [NW N NE; W center E; SW S SE].
enum class GridSlot : int { NW = 0, N, NE, W, Center, E, SW, S, SE };

class TransformerGrid {
 public:
  explicit TransformerGrid(const healpix::GridLevel& grid);

  // Built once per level and shared.
  static std::shared_ptr<const TransformerGrid> get(healpix::Level level);

  healpix::Level level() const { return level_; }
  std::int64_t n_pix() const { return level_.n_pixels(); }
  std::span<const std::int32_t> rows() const { return rows_; }
  std::span<const std::int32_t, 9> row(std::int64_t pix) const {
    return std::span<const std::int32_t, 9>(rows_.data() + pix * 9, 9);
  }
  std::int64_t missing_entries() const;

 private:
  healpix::Level level_;
  std::vector<std::int32_t> rows_;
};

// 3 x (3 n) x C image; pixel p's patch occupies columns 3p..3p+2.
template <typename T>
struct BasicPatchTensor {
  healpix::Level level{0};
  std::int64_t channels = 1;
  std::vector<T> data;

  std::int64_t width() const { return 3 * level.n_pixels(); }
  T at(int row, std::int64_t col, std::int64_t ch) const {
    return data[static_cast<std::size_t>((row * width() + col) * channels + ch)];
  }
};

using PatchTensor = BasicPatchTensor<float>;

// 3x3 kernel, stored [slot][c_in][c_out] with slots in GridSlot order.
template <typename T>
struct SphericalKernel {
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  std::vector<T> weights;  // 9 * c_in * c_out
  std::vector<T> bias;     // c_out

  SphericalKernel() = default;
  SphericalKernel(std::int64_t cin, std::int64_t cout)
      : c_in(cin), c_out(cout), weights(static_cast<std::size_t>(9 * cin * cout)),
        bias(static_cast<std::size_t>(cout)) {}

  T& w(int slot, std::int64_t ci, std::int64_t co) {
    return weights[static_cast<std::size_t>((slot * c_in + ci) * c_out + co)];
  }
};

// Transposed 1x4 kernel along the nested axis, stored [c_in][child][c_out].
template <typename T>
struct UnpoolKernel {
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  std::vector<T> weights;  // c_in * 4 * c_out
  std::vector<T> bias;     // c_out

  UnpoolKernel() = default;
  UnpoolKernel(std::int64_t cin, std::int64_t cout)
      : c_in(cin), c_out(cout), weights(static_cast<std::size_t>(4 * cin * cout)),
        bias(static_cast<std::size_t>(cout)) {}

  T& w(std::int64_t ci, int child, std::int64_t co) {
    return weights[static_cast<std::size_t>((ci * 4 + child) * c_out + co)];
  }
};

template <typename T>
struct PoolResult {
  BasicSignal<T> signal;
  std::vector<std::uint8_t> argmax;  // winning child offset per (pixel, channel)
};

template <typename T>
BasicPatchTensor<T> gather(const BasicSignal<T>& signal, const TransformerGrid& grid);

// Gather followed by a 3x3 convolution with stride 1x3 over the patch image.
template <typename T>
BasicSignal<T> spherical_conv(const BasicSignal<T>& signal, const SphericalKernel<T>& kernel);

template <typename T>
PoolResult<T> spherical_pool(const BasicSignal<T>& signal);

// Child 4p+k receives W[k]^T in[p] + bias.
template <typename T>
BasicSignal<T> spherical_unpool_conv(const BasicSignal<T>& signal, const UnpoolKernel<T>& kernel);

// out[perm[p]] = in[p].
template <typename T>
BasicSignal<T> permute_pixels(const BasicSignal<T>& signal, std::span<const std::int32_t> perm);

}  // namespace stm
