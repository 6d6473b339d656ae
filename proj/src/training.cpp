#include "stm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "stm/errors.hpp"
#include "stm/metrics.hpp"
#include "stm/projection.hpp"

namespace stm::train {

std::int64_t Dataset::size() const {
  const std::int64_t per = sample_values();
  return per == 0 ? 0 : static_cast<std::int64_t>(signals.size()) / per;
}

void Dataset::add(std::span<const float> signal, std::span<const std::int32_t> label) {
  if (static_cast<std::int64_t>(signal.size()) != sample_values()) {
    throw ContractError("sample has " + std::to_string(signal.size()) + " values, expected " +
                        std::to_string(sample_values()));
  }
  const std::size_t want = per_pixel_labels ? static_cast<std::size_t>(level.n_pixels()) : 1;
  if (label.size() != want) throw ContractError("sample label count mismatch");
  signals.insert(signals.end(), signal.begin(), signal.end());
  labels.insert(labels.end(), label.begin(), label.end());
}

Dataset project_mnist(const io::IdxImages& images, std::span<const std::uint8_t> labels, std::size_t limit,
                      healpix::Level level) {
  if (images.rows != 28 || images.cols != 28) throw ContractError("MNIST images must be 28 x 28");
  if (labels.size() != images.count) throw ContractError("image and label counts differ");
  const std::size_t n = limit == 0 ? images.count : std::min<std::size_t>(limit, images.count);
  Dataset out;
  out.level = level;
  out.channels = 1;
  out.signals.resize(n * static_cast<std::size_t>(level.n_pixels()));
  out.labels.resize(n);
  const auto per = static_cast<std::size_t>(level.n_pixels());
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = projection::project_digit(images.image(i), level);
    std::transform(s.data.begin(), s.data.end(), out.signals.begin() + static_cast<std::ptrdiff_t>(i * per),
                   [](double v) { return static_cast<float>(v); });
    out.labels[i] = labels[i];
  }
  return out;
}

Dataset synthetic_segmentation(std::int64_t count, healpix::Level level, int coarse, std::int64_t channels,
                               std::int32_t num_classes, std::uint64_t seed) {
  if (coarse < 0 || coarse > level.value()) throw ConfigError("coarse level must lie in [0, level]");
  if (num_classes < 2 || num_classes > channels) throw ConfigError("need 2 <= classes <= channels");
  Dataset out;
  out.level = level;
  out.channels = channels;
  out.per_pixel_labels = true;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::int64_t n = level.n_pixels();
  const int shift = 2 * (level.value() - coarse);
  for (std::int64_t s = 0; s < count; ++s) {
    std::vector<float> cell(static_cast<std::size_t>((n >> shift) * channels));
    for (auto& v : cell) v = u(rng);
    std::vector<float> x(static_cast<std::size_t>(n * channels));
    std::vector<std::int32_t> y(static_cast<std::size_t>(n));
    for (std::int64_t p = 0; p < n; ++p) {
      float* px = x.data() + p * channels;
      for (std::int64_t c = 0; c < channels; ++c) px[c] = cell[static_cast<std::size_t>((p >> shift) * channels + c)] + 0.1f * u(rng);
      y[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(std::max_element(px, px + num_classes) - px);
    }
    out.add(x, y);
  }
  return out;
}

namespace {

nn::Tensor<float> batch_input(const Dataset& data, std::span<const std::int64_t> samples) {
  const std::int64_t per = data.sample_values();
  std::vector<float> x(static_cast<std::size_t>(per) * samples.size());
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto src = data.signals.begin() + samples[b] * per;
    std::copy(src, src + per, x.begin() + static_cast<std::ptrdiff_t>(b) * per);
  }
  return nn::Tensor<float>({static_cast<std::int64_t>(samples.size()), data.level.n_pixels(), data.channels},
                           std::move(x));
}

std::vector<std::int32_t> batch_labels(const Dataset& data, std::span<const std::int64_t> samples) {
  const std::int64_t per = data.per_pixel_labels ? data.level.n_pixels() : 1;
  std::vector<std::int32_t> y;
  y.reserve(static_cast<std::size_t>(per) * samples.size());
  for (const auto s : samples) {
    const auto src = data.labels.begin() + s * per;
    y.insert(y.end(), src, src + per);
  }
  return y;
}

// Logits as [rows, classes]; per-pixel rows for segmentation.
nn::Tensor<float> as_rows(nn::Tape<float>& tape, const nn::Tensor<float>& logits) {
  if (logits.shape().size() == 2) return logits;
  const std::int64_t k = logits.shape().back();
  return nn::reshape(tape, logits, {logits.size() / k, k});
}

const std::int32_t kIgnore = metrics::kIgnoreLabel;

}  // namespace

StepResult train_step(models::Model<float>& model, nn::Sgd<float>& optimizer, const Dataset& data,
                      std::span<const std::int64_t> samples) {
  const auto x = batch_input(data, samples);
  const auto y = batch_labels(data, samples);
  optimizer.zero_grad();
  nn::Tape<float> tape;
  const auto logits = as_rows(tape, model.forward(tape, x, true));
  const auto loss = nn::softmax_xent(tape, logits, y, kIgnore);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("training loss is not finite");
  tape.backward(loss);
  optimizer.step();

  const auto pred = metrics::argmax_rows<float>(logits.data(), logits.shape().back());
  StepResult r{value, 0, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == kIgnore) continue;
    ++r.counted;
    r.correct += pred[i] == y[i];
  }
  return r;
}

Evaluation evaluate(models::Model<float>& model, const Dataset& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  const std::int64_t n = data.size();
  if (n == 0) throw DomainError("cannot evaluate an empty dataset");
  const std::int32_t k = static_cast<std::int32_t>(model.spec().num_classes);
  Evaluation ev;
  metrics::ConfusionMatrix cm(k);
  double loss_sum = 0.0;
  std::int64_t loss_rows = 0;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(std::min<std::int64_t>(batch_size, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    const auto x = batch_input(data, idx);
    const auto y = batch_labels(data, idx);
    nn::Tape<float> tape(false);
    const auto logits = as_rows(tape, model.forward(tape, x, false));
    const auto rows = static_cast<std::int64_t>(
        std::count_if(y.begin(), y.end(), [](std::int32_t v) { return v != kIgnore; }));
    if (rows > 0) {
      loss_sum += static_cast<double>(nn::softmax_xent(tape, logits, y, kIgnore).item()) * static_cast<double>(rows);
      loss_rows += rows;
    }
    const auto pred = metrics::argmax_rows<float>(logits.data(), k);
    cm.add(pred, y);
    ev.predictions.insert(ev.predictions.end(), pred.begin(), pred.end());
  }
  ev.loss = loss_rows > 0 ? loss_sum / static_cast<double>(loss_rows) : 0.0;
  ev.accuracy = cm.pixel_accuracy();
  ev.miou = data.per_pixel_labels ? cm.miou() : 0.0;
  return ev;
}

std::vector<EpochMetrics> fit(models::Model<float>& model, const Dataset& train, const Dataset* test,
                              const TrainConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (config.epochs < 1 || config.batch_size < 1) throw ConfigError("epochs and batch size must be positive");
  if (!(config.sgd.lr > 0.0)) throw ConfigError("learning rate must be positive");
  const std::int64_t n = train.size();
  if (n == 0) throw DomainError("empty training set");
  nn::Sgd<float> opt(model.parameters(), config.sgd);
  std::mt19937_64 rng(config.seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochMetrics> history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::int64_t correct = 0, counted = 0, seen = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto len = std::min<std::int64_t>(config.batch_size, n - start);
      const auto r = train_step(model, opt, train, std::span(order).subspan(static_cast<std::size_t>(start),
                                                                              static_cast<std::size_t>(len)));
      loss_sum += r.loss * static_cast<double>(len);
      seen += len;
      correct += r.correct;
      counted += r.counted;
    }
    EpochMetrics tr{epoch, "train", loss_sum / static_cast<double>(seen),
                    counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0, 0.0};
    history.push_back(tr);
    if (on_epoch) on_epoch(tr);
    if (test) {
      const auto ev = evaluate(model, *test);
      EpochMetrics te{epoch, "test", ev.loss, ev.accuracy, ev.miou};
      history.push_back(te);
      if (on_epoch) on_epoch(te);
    }
  }
  return history;
}

void write_metrics_header(std::ostream& out, const std::vector<std::string>& provenance, bool with_miou) {
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "epoch,split,loss,accuracy" << (with_miou ? ",miou" : "") << '\n';
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m, bool with_miou) {
  char buf[160];
  if (with_miou) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f\n", m.epoch, m.split.c_str(), m.loss, m.accuracy, m.miou);
  } else {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f\n", m.epoch, m.split.c_str(), m.loss, m.accuracy);
  }
  out << buf;
}

}  // namespace stm::train
