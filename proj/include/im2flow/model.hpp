#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "im2flow/flow_core.hpp"
#include "im2flow/image.hpp"
#include "im2flow/nn.hpp"

namespace im2flow {

using Tensor = nn::Tensor<float>;

struct ModelConfig {
  int input_size = 64;
  int in_channels = 3;
  int base_channels = 16;
  int depth = 4;
  std::vector<int> dilation_rates{1, 2, 4};
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Channels after the stem (stage 0) and after down-block `stage`.
  int channels_at(int stage) const;
  int bottleneck_size() const { return input_size >> depth; }
};

/// Receptive field (pixels) of one bottleneck unit, derived from the layer
/// geometry.
int bottleneck_receptive_field(const ModelConfig& config);

/// U-Net style encoder/decoder mapping an image to an encoded flow map:
///   stem conv -> `depth` stride-2 Conv-BN-ReLU blocks -> dilated bottleneck
///   -> `depth` [2x transposed conv, concat skip, Conv-BN-ReLU] blocks
///   -> 1x1 head.
/// Output channels: tanh (sin), tanh (cos), m_max * sigmoid (magnitude).
class Im2FlowModel {
 public:
  /// Deterministic initialization from config.seed.
  explicit Im2FlowModel(const ModelConfig& config, float m_max = 1.0f);

  const ModelConfig& config() const { return config_; }
  float m_max() const { return m_max_; }
  void set_m_max(float m_max);

  void set_input_stats(std::vector<double> mean, std::vector<double> stddev);

  /// Sets the magnitude head bias so that a zero pre-activation predicts
  /// `magnitude` (clamped to [1e-4, 0.5] * m_max).
  void set_magnitude_prior(double magnitude);
  const std::vector<double>& input_mean() const { return mean_; }
  const std::vector<double>& input_std() const { return std_; }

  /// Caches activations for backward(). images: (N, C, S, S) in [0, 1].
  Tensor forward(const Tensor& images, nn::Mode mode);
  /// Accumulates parameter gradients from d(loss)/d(output).
  void backward(const Tensor& doutput);

  /// Inference with running statistics. `skip_enabled[i] == false` zeroes
  /// the skip connection from encoder stage i (probe only).
  Tensor infer(const Tensor& images, std::span<const bool> skip_enabled = {}) const;

  /// Flattened bottleneck activations, one row per image.
  Tensor bottleneck_features(const Tensor& images) const;

  std::vector<nn::Parameter<float>*> parameters();
  std::vector<nn::Buffer<float>*> buffers();
  std::size_t parameter_count();

 private:
  struct UpBlock {
    nn::ConvTranspose2x2<float> up;
    nn::ConvBnRelu<float> fuse;
    int skip_channels = 0;
  };

  Tensor normalize(const Tensor& images) const;
  void check_input(const Tensor& images) const;

  ModelConfig config_;
  float m_max_ = 1.0f;
  std::vector<double> mean_;
  std::vector<double> std_;

  nn::ConvBnRelu<float> stem_;
  std::vector<nn::ConvBnRelu<float>> down_;
  std::vector<nn::ConvBnRelu<float>> bottleneck_;
  std::vector<UpBlock> up_;  // deepest first
  nn::Conv2d<float> head_;
  Tensor head_out_;          // activated output, cached for backward
};

/// Images (all with the model's channel count and size) to a batch tensor.
Tensor images_to_tensor(std::span<const Image> images);
Tensor image_to_tensor(const Image& image);

/// Splits an (N, 3, H, W) network output into encoded flows.
std::vector<EncodedFlow> tensor_to_encoded(const Tensor& t);
/// Stacks encoded flows into an (N, 3, H, W) tensor.
Tensor encoded_to_tensor(std::span<const EncodedFlow> flows);

/// Inference helper: images -> encoded flows, in batches.
std::vector<EncodedFlow> predict_encoded(const Im2FlowModel& model, std::span<const Image> images,
                                         int batch_size = 32);

void save_checkpoint(Im2FlowModel& model, const std::filesystem::path& path);
Im2FlowModel load_checkpoint(const std::filesystem::path& path);

}  // namespace im2flow
