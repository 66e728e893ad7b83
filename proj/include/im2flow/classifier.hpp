#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "im2flow/nn.hpp"

namespace im2flow {

struct ClassifierConfig {
  int in_channels = 3;
  int base_channels = 16;
  int num_classes = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Three [conv3x3 -> BN -> ReLU -> maxpool2] blocks (base, 2*base, 4*base
/// channels), global average pooling and a linear head. Activation taps 1..3
/// are the block outputs. Used both as the content-loss network over encoded
/// flow and as the appearance/motion stream classifier.
template <typename T>
class ConvClassifier {
 public:
  static constexpr int kBlocks = 3;

  ConvClassifier() = default;
  explicit ConvClassifier(const ClassifierConfig& config) : config_(config) {
    config.validate();
    int in = config.in_channels;
    for (int b = 0; b < kBlocks; ++b) {
      const int out = config.base_channels << b;
      blocks_[b] = nn::ConvBnRelu<T>("block" + std::to_string(b + 1), in, out, 1, 1);
      in = out;
    }
    head_ = nn::Linear<T>("head", in, config.num_classes);
    mean_.assign(config.in_channels, 0.0);
    std_.assign(config.in_channels, 1.0);
    Rng rng(Rng::derive(config.seed, 0xc1a5));
    for (auto& b : blocks_) b.init(rng);
    head_.init(rng);
  }

  const ClassifierConfig& config() const { return config_; }

  void set_input_stats(std::vector<double> mean, std::vector<double> stddev) {
    if (mean.size() != static_cast<std::size_t>(config_.in_channels) || stddev.size() != mean.size())
      throw ConfigError("ConvClassifier: input statistics size mismatch");
    for (double s : stddev)
      if (!(s > 0.0)) throw ConfigError("ConvClassifier: input std must be > 0");
    mean_ = std::move(mean);
    std_ = std::move(stddev);
  }
  const std::vector<double>& input_mean() const { return mean_; }
  const std::vector<double>& input_std() const { return std_; }

  /// Output shape of tap j (1-based) for a square input of the given size.
  std::array<int, 3> tap_shape(int tap, int input_size) const {
    check_tap(tap);
    return {config_.base_channels << (tap - 1), input_size >> tap, input_size >> tap};
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    nn::Tensor<T> h = forward_tap(x, kBlocks, mode);
    return head_.forward(pool_.forward(h));
  }

  nn::Tensor<T> infer(const nn::Tensor<T>& x) const {
    return head_.infer(nn::GlobalAvgPool<T>::infer(infer_tap(x, kBlocks)));
  }

  nn::Tensor<T> forward_tap(const nn::Tensor<T>& x, int tap, nn::Mode mode) {
    check_tap(tap);
    nn::Tensor<T> h = normalize(x);
    for (int b = 0; b < tap; ++b) h = pools_[b].forward(blocks_[b].forward(h, mode));
    return h;
  }

  nn::Tensor<T> infer_tap(const nn::Tensor<T>& x, int tap) const {
    check_tap(tap);
    nn::Tensor<T> h = normalize(x);
    for (int b = 0; b < tap; ++b) h = pools_[b].infer(blocks_[b].infer(h));
    return h;
  }

  /// Gradient of the logits w.r.t. the raw input; must follow forward().
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits, bool accumulate_param_grads = true) {
    nn::Tensor<T> d = pool_.backward(head_.backward(dlogits, accumulate_param_grads));
    return backward_from_tap(d, kBlocks, accumulate_param_grads);
  }

  /// Gradient of tap j w.r.t. the raw input; must follow forward_tap(x, j).
  nn::Tensor<T> backward_from_tap(const nn::Tensor<T>& dtap, int tap, bool accumulate_param_grads = true) {
    check_tap(tap);
    nn::Tensor<T> d = dtap;
    for (int b = tap - 1; b >= 0; --b) d = blocks_[b].backward(pools_[b].backward(d), accumulate_param_grads);
    for (int n = 0; n < d.n(); ++n)
      for (int c = 0; c < d.c(); ++c)
        for (auto& v : d.plane(n, c)) v = static_cast<T>(v / std_[c]);
    return d;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> p;
    for (auto& b : blocks_)
      for (auto* q : b.parameters()) p.push_back(q);
    for (auto* q : head_.parameters()) p.push_back(q);
    return p;
  }

  std::vector<nn::Buffer<T>*> buffers() {
    std::vector<nn::Buffer<T>*> out;
    for (auto& b : blocks_)
      for (auto* q : b.buffers()) out.push_back(q);
    return out;
  }

  /// Same network in another precision.
  template <typename U>
  ConvClassifier<U> cast() {
    ConvClassifier<U> out(config_);
    out.set_input_stats(mean_, std_);
    auto src_p = parameters();
    auto dst_p = out.parameters();
    for (std::size_t i = 0; i < src_p.size(); ++i) dst_p[i]->value = src_p[i]->value.template cast<U>();
    auto src_b = buffers();
    auto dst_b = out.buffers();
    for (std::size_t i = 0; i < src_b.size(); ++i) dst_b[i]->value = src_b[i]->value.template cast<U>();
    return out;
  }

 private:
  void check_tap(int tap) const {
    if (tap < 1 || tap > kBlocks) throw ConfigError("ConvClassifier: tap must be in [1, 3], got " + std::to_string(tap));
  }

  nn::Tensor<T> normalize(const nn::Tensor<T>& x) const {
    if (x.c() != config_.in_channels)
      throw ConfigError("ConvClassifier: expected " + std::to_string(config_.in_channels) + " channels, got " +
                        std::to_string(x.c()));
    nn::Tensor<T> out = x;
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c)
        for (auto& v : out.plane(n, c)) v = static_cast<T>((v - mean_[c]) / std_[c]);
    return out;
  }

  ClassifierConfig config_;
  std::array<nn::ConvBnRelu<T>, kBlocks> blocks_;
  std::array<nn::MaxPool2<T>, kBlocks> pools_;
  nn::GlobalAvgPool<T> pool_;
  nn::Linear<T> head_;
  std::vector<double> mean_;
  std::vector<double> std_;
};

using Classifier = ConvClassifier<float>;

/// Row-wise softmax of (N, K) logits, computed in double.
std::vector<std::vector<double>> softmax_rows(const nn::Tensor<float>& logits);

void save_classifier(Classifier& net, const std::filesystem::path& path, const nlohmann::json& extra = {});
/// Returns the network and the `extra` header section.
Classifier load_classifier(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace im2flow
