#include "stm/tensor.hpp"

#include <algorithm>

#include "stm/errors.hpp"

namespace stm::nn {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (const auto d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->data.assign(static_cast<std::size_t>(numel(shape)), T(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
    throw ContractError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ContractError("item() on a tensor of shape " + to_string(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tape<T>::make_output(Shape shape, bool requires_grad) {
  Tensor<T> t(std::move(shape), requires_grad && recording_);
  t.impl()->producer = this;
  return t;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  if (!recording_) return;
  if (consumed_) throw ContractError("tape already ran backward; record a new forward pass");
  nodes_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!recording_) throw ContractError("backward on a non-recording tape");
  if (consumed_) throw ContractError("backward called twice without a new forward pass");
  if (!loss.defined() || loss.producer() != this || !loss.requires_grad()) {
    throw ContractError("backward: loss is detached from this tape");
  }
  if (loss.size() != 1) throw ContractError("backward: loss must be a scalar");
  consumed_ = true;
  Tensor<T> seed = loss;
  seed.grad()[0] = T(1);
  visited_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    (*it)();
    ++visited_;
  }
  nodes_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace stm::nn
