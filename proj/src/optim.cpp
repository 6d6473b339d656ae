#include "stm/optim.hpp"

#include <cmath>
#include <utility>

#include "stm/errors.hpp"

namespace stm::nn {

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(static_cast<std::size_t>(p.size()), T(0));
}

template <typename T>
void Sgd<T>::step() {
  for (const auto& p : params_) {
    for (const T g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("sgd: non-finite gradient");
    }
  }
  const T lr = static_cast<T>(config_.lr);
  const T mu = static_cast<T>(config_.momentum);
  const T wd = static_cast<T>(config_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto w = p.data();
    const auto g = std::as_const(p).grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gi = g.empty() ? T(0) : g[i];
      v[i] = mu * v[i] + gi + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace stm::nn
