#pragma once

// Mini-batch training and evaluation loops shared by the command line and the
// acceptance runner. Everything runs in 32-bit; order of samples is fixed by the seed.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stm/formats.hpp"
#include "stm/models.hpp"
#include "stm/optim.hpp"

namespace stm::train {

struct Dataset {
  healpix::Level level{0};
  std::int64_t channels = 1;
  bool per_pixel_labels = false;      // segmentation when true
  std::vector<float> signals;         // samples x pixels x channels
  std::vector<std::int32_t> labels;   // one per sample, or one per pixel

  std::int64_t sample_values() const { return level.n_pixels() * channels; }
  std::int64_t size() const;

  void add(std::span<const float> signal, std::span<const std::int32_t> label);
};

// Digits 0 .. limit-1 (all when limit is 0) through project_digit.
Dataset project_mnist(const io::IdxImages& images, std::span<const std::uint8_t> labels, std::size_t limit,
                      healpix::Level level);

// Segmentation signals that are piecewise constant on the cells of level `coarse` plus uniform
// noise in [0, 0.1); each pixel is labeled with the argmax of its first num_classes channels.
Dataset synthetic_segmentation(std::int64_t count, healpix::Level level, int coarse, std::int64_t channels,
                               std::int32_t num_classes, std::uint64_t seed);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  nn::SgdConfig sgd;
  std::uint64_t seed = 42;
};

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;  // pixel accuracy for segmentation
  double miou = 0.0;      // segmentation only
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  double miou = 0.0;
  std::vector<std::int32_t> predictions;
};

// Forward only, batch statistics frozen.
Evaluation evaluate(models::Model<float>& model, const Dataset& data, int batch_size = 64);

// One SGD step on the given samples. Returns the mean loss and the number of correct
// predictions (pixels for segmentation). Throws NumericError on a non-finite loss.
struct StepResult {
  double loss = 0.0;
  std::int64_t correct = 0;
  std::int64_t counted = 0;
};
StepResult train_step(models::Model<float>& model, nn::Sgd<float>& optimizer, const Dataset& data,
                      std::span<const std::int64_t> samples);

// Runs config.epochs shuffled passes. After every epoch `on_epoch` gets the running training
// metrics and, when `test` is non-null, the test metrics.
std::vector<EpochMetrics> fit(models::Model<float>& model, const Dataset& train, const Dataset* test,
                              const TrainConfig& config,
                              const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Metrics CSV: '#'-prefixed provenance lines, the header row, then one row per metric.
void write_metrics_header(std::ostream& out, const std::vector<std::string>& provenance, bool with_miou);
void write_metrics_row(std::ostream& out, const EpochMetrics& m, bool with_miou);

}  // namespace stm::train
