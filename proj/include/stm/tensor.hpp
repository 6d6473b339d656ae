#pragma once

// Dense tensors and a reverse-mode tape.
//
// A Tensor is a shared handle. Ops take the Tape they record onto as their
// first argument; Tape::backward replays the recorded closures in reverse and
// may run once per forward pass.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace stm::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  const Tape<T>* producer = nullptr;  // null for leaves
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::vector<T>& values() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  // Gradient buffer; allocated (zero) on first access.
  std::span<T> grad();
  std::span<const T> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  const Tape<T>* producer() const { return impl_->producer; }

  T item() const;

  TensorImpl<T>* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl<T>> shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
class Tape {
 public:
  // A non-recording tape runs ops forward only (evaluation).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Output tensor owned by this tape. requires_grad follows the inputs.
  Tensor<T> make_output(Shape shape, bool requires_grad);

  void record(std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node once, newest first.
  void backward(const Tensor<T>& loss);

  // Number of nodes run by the last backward pass.
  std::size_t visited() const { return visited_; }

  // Fingerprint of the branches taken by non-smooth ops (relu masks, pool
  // winners). Off by default; finite-difference checks use it to spot kinks.
  void track_branches(bool on) { track_branches_ = on; }
  bool tracks_branches() const { return track_branches_; }
  std::uint64_t branch_signature() const { return branch_signature_; }
  void mix_branch(std::uint64_t v) { branch_signature_ = (branch_signature_ ^ v) * 1099511628211ULL; }

 private:
  bool recording_;
  bool consumed_ = false;
  std::size_t visited_ = 0;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = 14695981039346656037ULL;
  std::vector<std::function<void()>> nodes_;
};

}  // namespace stm::nn
