#pragma once

#include <vector>

#include "stm/tensor.hpp"

namespace stm::nn {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Momentum SGD: v <- momentum * v + (g + weight_decay * w); w <- w - lr * v.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Tensor<T>> params, SgdConfig config);

  // Throws NumericError if any gradient is non-finite; parameters are left untouched then.
  void step();
  void zero_grad();

  const SgdConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> velocity_;
  SgdConfig config_;
};

}  // namespace stm::nn
