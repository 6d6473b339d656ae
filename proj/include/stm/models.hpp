#pragma once

// Declarative network descriptions and a runnable Model over them.
//
// A ModelSpec is a list of layers in evaluation order. Each layer names its
// inputs by index; kModelInput refers to the network input. Spherical
// activations are [B, pixels, C] at some level, dense ones are [B, F].

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stm/checkpoint.hpp"
#include "stm/ops.hpp"

namespace stm::models {

enum class LayerKind {
  SphericalConv,  // 3x3 through the transformer grid
  Conv1x1,
  Pool,           // 1x4 max over nested children, level - 1
  Unpool,         // transposed 1x4 conv, level + 1
  BatchNorm,
  Relu,
  Flatten,        // [B, N, C] -> [B, N*C], nested pixel order
  GlobalAverage,  // [B, N, C] -> [B, C]
  Linear,
  Concat,         // along channels / features
  Sum,
  Softmax,        // terminal marker; Model::forward returns logits
};

std::string to_string(LayerKind kind);

inline constexpr int kModelInput = -1;

struct LayerSpec {
  LayerKind kind;
  std::vector<int> inputs;      // one entry, two for Concat and Sum
  std::int64_t out_width = 0;   // output channels / features for parametrized layers
  std::string name;
};

struct ModelSpec {
  std::string architecture;
  int entry_level = 0;
  std::int64_t in_channels = 1;
  std::int64_t num_classes = 0;
  std::vector<std::int64_t> widths;  // per-stage conv widths
  bool anti_rotation = false;
  std::int64_t fc_width = 0;
  std::vector<LayerSpec> layers;
};

struct ActivationShape {
  bool spherical = true;
  int level = 0;              // spherical only
  std::int64_t channels = 0;  // channels, or features when dense

  bool operator==(const ActivationShape&) const = default;
};

std::string to_string(const ActivationShape& shape);

// Output shape of every layer. Throws ContractError on the first mismatch.
std::vector<ActivationShape> check_shapes(const ModelSpec& spec);

// Trainable parameters: conv/linear weights and biases, batchnorm gamma and beta.
std::int64_t count_params(const ModelSpec& spec);

std::int64_t layer_params(const ModelSpec& spec, std::size_t layer);

// Five-layer classifier: 4 x (spherical_conv, pool, batchnorm, relu), flatten, linear, softmax.
ModelSpec build_smnist(std::vector<std::int64_t> widths = {16, 24, 32, 48}, int entry_level = 4,
                       std::int64_t in_channels = 1, std::int64_t num_classes = 10);

// VGG-11 conv stack (conv - batchnorm - relu) with pools after convs 1, 2, 4, 6, 8 and
// fully connected layers of width fc_width. With anti_rotation, a parallel stream of
// conv1x1 layers mirrors each pre-pool conv; its output is added to the main stream before
// the pool, and the flattened streams are concatenated ahead of the first linear layer.
ModelSpec build_vgg11_spherical(bool anti_rotation, std::int64_t num_classes, int entry_level = 5,
                                std::int64_t in_channels = 6, std::int64_t fc_width = 1024,
                                std::vector<std::int64_t> widths = {64, 128, 256, 256, 512, 512, 512, 512});

// Encoder of two convs per level with widths[0] at the entry level; decoder stages unpool,
// concatenate the encoder features of the same level and apply two convs. The last layer is
// a spherical conv to num_classes.
ModelSpec build_unet_spherical(std::int64_t num_classes, int entry_level = 5, std::int64_t in_channels = 4,
                               std::vector<std::int64_t> widths = {64, 128, 256, 512, 512});

// conv1x1 + relu stack, global average, linear. Invariant under any pixel permutation.
ModelSpec build_pointwise_classifier(std::int64_t in_channels, std::vector<std::int64_t> widths,
                                     std::int64_t num_classes, int entry_level);

// key=value text: architecture, level, in_channels, num_classes, widths, anti_rotation, fc_width.
// '#' starts a comment.
ModelSpec parse_model_config(std::istream& in);
ModelSpec load_model_config(const std::filesystem::path& path);
std::string format_model_config(const ModelSpec& spec);

template <typename T>
class Model {
 public:
  // Weights are He-uniform from `seed`, biases and beta zero, gamma one.
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ActivationShape>& shapes() const { return shapes_; }

  // x: [B, pixels at entry level, in_channels]. Returns the input of the Softmax layer
  // (or the last layer's output when there is none).
  nn::Tensor<T> forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, bool training);

  std::vector<nn::Tensor<T>> parameters() const;
  std::vector<nn::Tensor<T>> layer_parameters(std::size_t layer) const { return params_.at(layer); }

  // Parameters and batchnorm running statistics, for checkpoints.
  std::vector<nn::NamedArray> state() const;
  void load_state(const std::vector<nn::NamedArray>& arrays);

 private:
  ModelSpec spec_;
  std::vector<ActivationShape> shapes_;
  std::vector<std::vector<nn::Tensor<T>>> params_;
  std::vector<nn::BatchNormState<T>> bn_;
};

}  // namespace stm::models
