#pragma once

// Classification and segmentation scores over integer label arrays.

#include <cstdint>
#include <span>
#include <vector>

namespace stm::metrics {

inline constexpr std::int32_t kIgnoreLabel = 255;

// Fraction of equal entries. Throws DomainError when empty.
double accuracy(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth);

// Confusion counts over pixels whose truth is not kIgnoreLabel.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int32_t num_classes);

  // Throws ContractError on length mismatch or labels outside [0, K) (truth may also be 255).
  void add(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth);

  std::int32_t num_classes() const { return k_; }
  std::int64_t count(std::int32_t truth, std::int32_t pred) const { return counts_[truth * k_ + pred]; }
  std::int64_t total() const;
  bool present(std::int32_t c) const;  // appears in truth
  double iou(std::int32_t c) const;    // NaN when c is absent from truth and predictions

  // Both throw DomainError when no pixel was counted.
  double pixel_accuracy() const;
  double miou() const;  // mean IoU over classes present in truth

 private:
  std::int32_t k_;
  std::vector<std::int64_t> counts_;  // [truth][pred]
};

double pixel_accuracy(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                      std::int32_t num_classes);
double miou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::int32_t num_classes);

// Row-wise argmax of a [rows, k] score matrix; ties go to the lowest index.
template <typename T>
std::vector<std::int32_t> argmax_rows(std::span<const T> scores, std::int64_t k);

}  // namespace stm::metrics
