#include "stm/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "stm/errors.hpp"

namespace stm::metrics {

double accuracy(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  if (pred.size() != truth.size()) throw ContractError("accuracy: prediction and truth lengths differ");
  if (truth.empty()) throw DomainError("accuracy: empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ConfusionMatrix::ConfusionMatrix(std::int32_t num_classes) : k_(num_classes) {
  if (num_classes < 1 || num_classes >= kIgnoreLabel) {
    throw ContractError("confusion matrix: class count " + std::to_string(num_classes) + " outside 1..254");
  }
  counts_.assign(static_cast<std::size_t>(k_) * static_cast<std::size_t>(k_), 0);
}

void ConfusionMatrix::add(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  if (pred.size() != truth.size()) throw ContractError("confusion matrix: prediction and truth lengths differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto t = truth[i];
    if (t == kIgnoreLabel) continue;
    if (t < 0 || t >= k_) throw ContractError("truth label " + std::to_string(t) + " outside [0, K) and not 255");
    const auto p = pred[i];
    if (p < 0 || p >= k_) throw ContractError("predicted label " + std::to_string(p) + " outside [0, K)");
    ++counts_[static_cast<std::size_t>(t * k_ + p)];
  }
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto c : counts_) n += c;
  return n;
}

bool ConfusionMatrix::present(std::int32_t c) const {
  for (std::int32_t p = 0; p < k_; ++p) {
    if (count(c, p) > 0) return true;
  }
  return false;
}

double ConfusionMatrix::iou(std::int32_t c) const {
  std::int64_t tp = count(c, c), fn = 0, fp = 0;
  for (std::int32_t o = 0; o < k_; ++o) {
    if (o == c) continue;
    fn += count(c, o);
    fp += count(o, c);
  }
  const auto denom = tp + fn + fp;
  if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double ConfusionMatrix::pixel_accuracy() const {
  const auto n = total();
  if (n == 0) throw DomainError("pixel accuracy: empty evaluation set");
  std::int64_t diag = 0;
  for (std::int32_t c = 0; c < k_; ++c) diag += count(c, c);
  return static_cast<double>(diag) / static_cast<double>(n);
}

double ConfusionMatrix::miou() const {
  if (total() == 0) throw DomainError("mIoU: empty evaluation set");
  double sum = 0;
  int classes = 0;
  for (std::int32_t c = 0; c < k_; ++c) {
    if (!present(c)) continue;
    sum += iou(c);
    ++classes;
  }
  return sum / classes;
}

double pixel_accuracy(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                      std::int32_t num_classes) {
  ConfusionMatrix m(num_classes);
  m.add(pred, truth);
  return m.pixel_accuracy();
}

double miou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::int32_t num_classes) {
  ConfusionMatrix m(num_classes);
  m.add(pred, truth);
  return m.miou();
}

template <typename T>
std::vector<std::int32_t> argmax_rows(std::span<const T> scores, std::int64_t k) {
  if (k <= 0 || scores.size() % static_cast<std::size_t>(k) != 0) {
    throw ContractError("argmax_rows: score count is not a multiple of k");
  }
  std::vector<std::int32_t> out(scores.size() / static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const T* row = scores.data() + r * static_cast<std::size_t>(k);
    std::int32_t best = 0;
    for (std::int64_t c = 1; c < k; ++c) {
      if (row[c] > row[best]) best = static_cast<std::int32_t>(c);
    }
    out[r] = best;
  }
  return out;
}

template std::vector<std::int32_t> argmax_rows<float>(std::span<const float>, std::int64_t);
template std::vector<std::int32_t> argmax_rows<double>(std::span<const double>, std::int64_t);

}  // namespace stm::metrics
