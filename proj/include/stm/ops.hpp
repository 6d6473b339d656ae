#pragma once

// Differentiable ops over channel-last tensors. Spherical features are
// [batch, pixels, channels] in nested pixel order.

#include <cstdint>
#include <span>

#include "stm/tensor.hpp"
#include "stm/transformer.hpp"

namespace stm::nn {

// [B, N, C] -> [B, 3, 3N, C] through the level's transformer grid.
template <typename T>
Tensor<T> gather(Tape<T>& tape, const Tensor<T>& x, const TransformerGrid& grid);

// Valid convolution. x: [B, H, W, Cin], weights: [KH, KW, Cin, Cout], bias: [Cout].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias, std::int64_t stride_h = 1, std::int64_t stride_w = 1);

// gather + 3x3 stride-1x3 conv2d, reshaped back to [B, N, Cout].
template <typename T>
Tensor<T> spherical_conv(Tape<T>& tape, const Tensor<T>& x, const TransformerGrid& grid,
                         const Tensor<T>& weights, const Tensor<T>& bias);

// Per-pixel affine map. x: [B, N, Cin], weights: [Cin, Cout].
template <typename T>
Tensor<T> conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                  const Tensor<T>& bias);

// x: [B, F], weights: [F, O] -> [B, O].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias);

// [B, 4N, C] -> [B, N, C]. argmax (optional) receives the winning child offsets.
template <typename T>
Tensor<T> maxpool1x4(Tape<T>& tape, const Tensor<T>& x,
                     std::vector<std::uint8_t>* argmax = nullptr);

// Transposed 1x4 convolution. x: [B, N, Cin], weights: [Cin, 4, Cout] -> [B, 4N, Cout].
template <typename T>
Tensor<T> unpool_conv(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                      const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormState(std::int64_t channels = 0)
      : running_mean(static_cast<std::size_t>(channels), T(0)),
        running_var(static_cast<std::size_t>(channels), T(1)) {}
};

// Normalizes each channel (last axis) over every other axis. Training mode
// uses batch statistics (biased variance) and updates the running estimates.
template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormState<T>& state, bool training);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// Concatenate along the last axis.
template <typename T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

// [B, N, C] -> [B, C].
template <typename T>
Tensor<T> global_average(Tape<T>& tape, const Tensor<T>& x);

// Mean cross-entropy of softmax(logits) over the rows whose label != ignore_label.
// logits: [M, K]; labels: M entries.
template <typename T>
Tensor<T> softmax_xent(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::int32_t> labels,
                       std::int32_t ignore_label = -1);

// sum(x^2), a scalar.
template <typename T>
Tensor<T> sum_squares(Tape<T>& tape, const Tensor<T>& x);

}  // namespace stm::nn
