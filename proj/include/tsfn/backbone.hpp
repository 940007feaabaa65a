#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfn/container.hpp"
#include "tsfn/numlib.hpp"

namespace tsfn {

enum class StreamKind { Appearance, TargetMotion, EgoMotion };

inline constexpr std::array<StreamKind, 3> kAllStreams = {
    StreamKind::Appearance, StreamKind::TargetMotion, StreamKind::EgoMotion};

std::string_view to_string(StreamKind kind);
StreamKind parse_stream_kind(std::string_view name);

// One 3x3 same-padded convolution, ReLU, then an optional 2x2/2 max-pool.
struct ConvBlock {
  int out_channels = 8;
  bool pool = true;
  bool operator==(const ConvBlock&) const = default;
};

struct ConvNetConfig {
  int input_size = 56;
  int input_channels = 3;
  std::vector<ConvBlock> blocks;
  int head_classes = 2;

  int feature_channels() const;
  int feature_spatial() const;
  // Throws ConfigError when the block stack is empty or collapses to zero size.
  void validate() const;

  // 56x56 input, four blocks (8,16,16,16), pooling on the first three: 16 x 7 x 7 features.
  static ConvNetConfig desk(int input_channels, int head_classes, int feature_channels = 16);
  // 224x224 input, five pooled blocks ending at 512 channels: 512 x 7 x 7 features.
  static ConvNetConfig paper_shape(int input_channels, int head_classes);

  KeyValues to_key_values() const;
  static ConvNetConfig from_key_values(const KeyValues& kv);

  bool operator==(const ConvNetConfig&) const = default;
};

// "8p,16p,16" <-> blocks (p marks a pooled block).
std::string format_blocks(const std::vector<ConvBlock>& blocks);
std::vector<ConvBlock> parse_blocks(std::string_view text);

struct ConvLayerParams {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;  // out x in x 3 x 3
  std::vector<double> bias;    // out

  bool operator==(const ConvLayerParams&) const = default;
};

struct ConvNetParams {
  std::vector<ConvLayerParams> layers;
  std::vector<double> head_weight;  // classes x D
  std::vector<double> head_bias;    // classes

  // Visits every parameter tensor in declaration order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (auto& layer : layers) {
      fn(std::span<double>(layer.weight));
      fn(std::span<double>(layer.bias));
    }
    fn(std::span<double>(head_weight));
    fn(std::span<double>(head_bias));
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    for (const auto& layer : layers) {
      fn(std::span<const double>(layer.weight));
      fn(std::span<const double>(layer.bias));
    }
    fn(std::span<const double>(head_weight));
    fn(std::span<const double>(head_bias));
  }

  std::size_t parameter_count() const;
  // Same shapes, all zeros.
  ConvNetParams zeros_like() const;
  bool all_finite() const;

  bool operator==(const ConvNetParams&) const = default;
};

// He-normal conv weights (std sqrt(2/fan_in)), zero biases.
ConvNetParams init_params(const ConvNetConfig& config, SeededRng& rng);

Tensor3 forward_features(const ConvNetParams& params, const ConvNetConfig& config,
                         const Tensor3& input);
// Global-average-pool of the features followed by the affine head.
std::vector<double> forward_logits(const ConvNetParams& params, const ConvNetConfig& config,
                                   const Tensor3& input);

// Mean softmax cross-entropy over the batch. When `grad` is non-null it is
// overwritten with the gradient of that mean.
double loss_and_gradient(const ConvNetParams& params, const ConvNetConfig& config,
                         std::span<const Tensor3> inputs, std::span<const int> labels,
                         ConvNetParams* grad);

struct RmsPropHyper {
  double learning_rate = 1e-3;
  int batch_size = 20;
  int iterations = 300;
  std::uint64_t seed = 1;
  double decay = 0.9;
  double epsilon = 1e-8;
};

// Training samples are produced on demand so large flow stacks need not be
// materialised all at once.
struct StreamDataset {
  std::vector<int> labels;
  std::function<Tensor3(std::size_t)> input;

  std::size_t size() const { return labels.size(); }
};

struct StreamTrainResult {
  ConvNetParams params;
  std::vector<double> loss_history;  // one entry per iteration (batch loss)
};

StreamTrainResult train_stream(const StreamDataset& data, const ConvNetConfig& config,
                               const RmsPropHyper& hyper);

// Same as above but continuing from existing parameters.
StreamTrainResult train_stream(const StreamDataset& data, const ConvNetConfig& config,
                               const RmsPropHyper& hyper, ConvNetParams initial);

// Max relative error between the analytic gradient and central differences
// (step 1e-5) over `samples` randomly chosen parameters.
double gradient_check(const ConvNetParams& params, const ConvNetConfig& config,
                      std::span<const Tensor3> inputs, std::span<const int> labels,
                      int samples = 100, std::uint64_t seed = 17);

void save_params(const std::filesystem::path& path, const ConvNetConfig& config,
                 const ConvNetParams& params);
std::pair<ConvNetConfig, ConvNetParams> load_params(const std::filesystem::path& path);

}  // namespace tsfn
