#pragma once

// Raw numeric kernels over flat, channel-last buffers. Shared by the
// transformer API and the autodiff ops. Every output element is produced by
// exactly one loop nest with a fixed summation order, so results do not
// depend on the thread count. Backward kernels accumulate into their outputs.

#include <cstdint>
#include <span>

namespace stm::kernels {

// Transformer-grid slots per pixel (3x3).
inline constexpr int kSlots = 9;

// x: [batch, n, c]; rows: [n, 9] with -1 for missing;
// patches: [batch, 3, 3n, c], pixel p's patch in columns 3p..3p+2.
template <typename T>
void gather_forward(std::span<const T> x, std::int64_t batch, std::int64_t n, std::int64_t c,
                    std::span<const std::int32_t> rows, std::span<T> patches);

template <typename T>
void gather_backward(std::span<const T> dpatches, std::int64_t batch, std::int64_t n,
                     std::int64_t c, std::span<const std::int32_t> rows, std::span<T> dx);

struct Conv2dDims {
  std::int64_t batch = 1, height = 0, width = 0, cin = 0;
  std::int64_t kh = 3, kw = 3, cout = 0;
  std::int64_t stride_h = 1, stride_w = 1;

  std::int64_t out_h() const { return (height - kh) / stride_h + 1; }
  std::int64_t out_w() const { return (width - kw) / stride_w + 1; }
};

// Valid (unpadded) convolution. x: [batch, h, w, cin], weights: [kh, kw, cin, cout],
// bias: [cout] or empty, out: [batch, out_h, out_w, cout].
template <typename T>
void conv2d_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias,
                    const Conv2dDims& d, std::span<T> out);

// Any of dx, dweights, dbias may be empty to skip that gradient.
template <typename T>
void conv2d_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> dout,
                     const Conv2dDims& d, std::span<T> dx, std::span<T> dweights,
                     std::span<T> dbias);

// out[m, :] = bias + x[m, :] * w. x: [m, k], w: [k, n], bias: [n] or empty.
template <typename T>
void matmul_forward(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::int64_t m, std::int64_t k, std::int64_t n, std::span<T> out);

template <typename T>
void matmul_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dout,
                     std::int64_t m, std::int64_t k, std::int64_t n, std::span<T> dx,
                     std::span<T> dw, std::span<T> dbias);

// Max over groups of 4 consecutive rows. x: [batch, 4 * n_out, c], out: [batch, n_out, c].
// argmax holds the winning child offset (0..3); ties go to the lowest offset.
template <typename T>
void maxpool4_forward(std::span<const T> x, std::int64_t batch, std::int64_t n_out,
                      std::int64_t c, std::span<T> out, std::span<std::uint8_t> argmax);

template <typename T>
void maxpool4_backward(std::span<const T> dout, std::span<const std::uint8_t> argmax,
                       std::int64_t batch, std::int64_t n_out, std::int64_t c, std::span<T> dx);

}  // namespace stm::kernels
