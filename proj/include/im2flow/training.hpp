#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "im2flow/classifier.hpp"
#include "im2flow/model.hpp"
#include "im2flow/synthdata.hpp"

namespace im2flow {

enum class PixelWeighting : int { Uniform = 0, MagnitudeWeighted };
std::string_view weighting_name(PixelWeighting w);
PixelWeighting weighting_from_name(std::string_view name);

struct LossConfig {
  double lambda = 0.02;
  int content_layer = 2;
  PixelWeighting weighting = PixelWeighting::MagnitudeWeighted;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Losses over (N, 3, H, W) encoded-flow batches. When `grad` is given it
// receives d(loss)/d(pred).

/// Uniform: mean over the batch of the per-sample L2 norm of pred - target.
/// Magnitude-weighted: the squared errors of channels 1-2 are scaled per pixel
/// by w = f3_target / mean(f3_target) (a constant; 0 when the sample is
/// static) before the per-sample square root.
template <typename T>
T pixel_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, PixelWeighting mode,
             nn::Tensor<T>* grad = nullptr) {
  if (!pred.same_shape(target) || pred.c() != 3)
    throw ConfigError("pixel_loss: shape mismatch " + pred.shape_string() + " vs " + target.shape_string());
  if (grad) *grad = nn::Tensor<T>(pred.n(), pred.c(), pred.h(), pred.w());
  const int N = pred.n();
  const std::size_t P = pred.plane_size();
  double total = 0.0;
  std::vector<double> w(P, 1.0);
  for (int n = 0; n < N; ++n) {
    if (mode == PixelWeighting::MagnitudeWeighted) {
      auto m = target.plane(n, 2);
      double mean = 0.0;
      for (T v : m) mean += static_cast<double>(v);
      mean /= static_cast<double>(P);
      for (std::size_t i = 0; i < P; ++i) w[i] = mean > 1e-12 ? static_cast<double>(m[i]) / mean : 0.0;
    }
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) {
      auto p = pred.plane(n, c);
      auto t = target.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        sq += (c < 2 ? w[i] : 1.0) * d * d;
      }
    }
    const double norm = std::sqrt(sq);
    total += norm;
    if (grad && norm > 0.0) {
      const double k = 1.0 / (norm * N);
      for (int c = 0; c < 3; ++c) {
        auto p = pred.plane(n, c);
        auto t = target.plane(n, c);
        auto g = grad->plane(n, c);
        for (std::size_t i = 0; i < P; ++i) {
          const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
          g[i] = static_cast<T>((c < 2 ? w[i] : 1.0) * d * k);
        }
      }
    }
  }
  return static_cast<T>(total / N);
}

/// Mean over the batch of |a - b|^2 / (D * H * W) for activation maps.
template <typename T>
T tap_distance(const nn::Tensor<T>& a, const nn::Tensor<T>& b, nn::Tensor<T>* grad_b = nullptr) {
  if (!a.same_shape(b)) throw ConfigError("content loss: tap-shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  if (a.sample_size() == 0) throw ConfigError("content loss: empty activation map");
  const double dhw = static_cast<double>(a.sample_size());
  const int N = a.n();
  if (grad_b) *grad_b = nn::Tensor<T>(b.n(), b.c(), b.h(), b.w());
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    auto sa = a.sample(n);
    auto sb = b.sample(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
      const double d = static_cast<double>(sa[i]) - static_cast<double>(sb[i]);
      sq += d * d;
    }
    total += sq / dhw;
    if (grad_b) {
      auto g = grad_b->sample(n);
      for (std::size_t i = 0; i < sa.size(); ++i)
        g[i] = static_cast<T>(-2.0 * (static_cast<double>(sa[i]) - static_cast<double>(sb[i])) / (dhw * N));
    }
  }
  return static_cast<T>(total / N);
}

/// Feature distance at tap `layer` of phi (evaluated with running statistics).
/// phi's parameters never receive gradient.
template <typename T>
T content_loss(ConvClassifier<T>& phi, const nn::Tensor<T>& pred, const nn::Tensor<T>& target, int layer,
               nn::Tensor<T>* grad = nullptr) {
  if (!pred.same_shape(target)) throw ConfigError("content_loss: shape mismatch");
  if (layer < 1 || layer > ConvClassifier<T>::kBlocks)
    throw ConfigError("content_loss: content_layer must be in [1, 3], got " + std::to_string(layer));
  if ((pred.h() >> layer) < 1 || (pred.w() >> layer) < 1)
    throw ConfigError("content_loss: tap-shape mismatch, input " + pred.shape_string() + " too small for layer " +
                      std::to_string(layer));
  const nn::Tensor<T> a = phi.infer_tap(target, layer);
  if (!grad) return tap_distance(a, phi.infer_tap(pred, layer));
  const nn::Tensor<T> b = phi.forward_tap(pred, layer, nn::Mode::Eval);
  nn::Tensor<T> dtap;
  const T loss = tap_distance(a, b, &dtap);
  *grad = phi.backward_from_tap(dtap, layer, false);
  return loss;
}

template <typename T>
struct LossBreakdown {
  T pixel = 0;
  T content = 0;
  T total = 0;
};

/// Copy of `x` with channels 1-2 zeroed wherever the magnitude weight of
/// `target` is zero (static pixels, or every pixel of a static sample).
template <typename T>
nn::Tensor<T> mask_static_directions(const nn::Tensor<T>& x, const nn::Tensor<T>& target) {
  nn::Tensor<T> out = x;
  const std::size_t P = x.plane_size();
  for (int n = 0; n < x.n(); ++n) {
    auto m = target.plane(n, 2);
    double mean = 0.0;
    for (T v : m) mean += static_cast<double>(v);
    mean /= static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i)
      if (!(mean > 1e-12) || m[i] == T(0)) out.plane(n, 0)[i] = out.plane(n, 1)[i] = T(0);
  }
  return out;
}

/// pixel + lambda * content. With lambda == 0 phi is not evaluated and may be
/// null. In magnitude-weighted mode phi sees the prediction through
/// mask_static_directions, so direction channels at static pixels get no
/// gradient from either term.
template <typename T>
LossBreakdown<T> total_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, ConvClassifier<T>* phi,
                            const LossConfig& config, nn::Tensor<T>* grad = nullptr) {
  config.validate();
  LossBreakdown<T> out;
  out.pixel = pixel_loss(pred, target, config.weighting, grad);
  out.total = out.pixel;
  if (config.lambda == 0.0) return out;
  if (!phi) throw ConfigError("total_loss: lambda > 0 requires a content network");
  const bool weighted = config.weighting == PixelWeighting::MagnitudeWeighted;
  const nn::Tensor<T> seen = weighted ? mask_static_directions(pred, target) : pred;
  nn::Tensor<T> gc;
  out.content = content_loss(*phi, seen, target, config.content_layer, grad ? &gc : nullptr);
  out.total = static_cast<T>(out.pixel + config.lambda * out.content);
  if (grad) {
    if (weighted) gc = mask_static_directions(gc, target);
    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += static_cast<T>(config.lambda * gc[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GradcheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  nn::Tensor<double> analytic;
  nn::Tensor<double> numeric;
};

/// Central finite differences against the analytic gradient returned by `fn`.
/// Relative error is |a - n| / max(|a|, |n|, floor). Inputs are limited to
/// 4x4 spatial extent.
using LossWithGrad = std::function<double(const nn::Tensor<double>&, nn::Tensor<double>*)>;
GradcheckResult gradcheck(const LossWithGrad& fn, const nn::Tensor<double>& x, double eps = 1e-6,
                          double floor = 1e-6);

// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 8;
  std::uint64_t seed = 0;
  bool flip = true;
  bool crop = true;
  int crop_pad = 4;

  void validate() const;
  nn::AdamConfig adam() const;
};

/// Network-ready view of a split.
struct FlowTrainingData {
  Tensor images;   // (N, 3, S, S)
  Tensor targets;  // encoded target flows
  std::vector<FlowField> flows;
  std::vector<int> labels;
};

FlowTrainingData make_flow_data(std::span<const SyntheticSample> samples);

/// Per-channel mean and standard deviation of an image batch.
void channel_stats(const Tensor& batch, std::vector<double>& mean, std::vector<double>& stddev);

/// Quantile q of target magnitudes over moving pixels (M > epsilon).
float magnitude_quantile(std::span<const SyntheticSample> samples, double q = 0.99,
                         float epsilon = MotionThresholds{}.motion_epsilon);

/// Fresh model whose magnitude normalizer, input statistics and magnitude
/// prior (median target magnitude) come from the training split.
Im2FlowModel make_model_for(const ModelConfig& config, std::span<const SyntheticSample> train);

/// One training sample after the paired flip/crop transform seeded by
/// (seed, epoch, index).
void augment_pair(const TrainConfig& config, int epoch, int index, Image& image, FlowField& flow);

struct EpochRecord {
  int epoch = 0;
  double train_pixel = 0.0;
  double train_content = 0.0;
  double train_total = 0.0;
  double val_pixel = 0.0;
  double val_content = 0.0;
  double val_total = 0.0;
  double val_epe = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;  // epoch 0 is the untrained model
  int best_epoch = 0;
  double best_val_epe = 0.0;
};

using HistorySink = std::function<void(const nlohmann::json&)>;

/// Val losses and mean per-image EPE of a model on a data view.
EpochRecord evaluate_losses(const Im2FlowModel& model, const FlowTrainingData& data, Classifier* phi,
                            const LossConfig& loss, int batch_size = 32);

/// Adam on total_loss with paired augmentation. The parameters with the best
/// validation EPE are restored at the end and, when `checkpoint` is set,
/// written on every improvement. A non-finite loss restores the last good
/// parameters, writes them and throws NumericalError.
TrainResult train_im2flow(const Dataset& dataset, Im2FlowModel& model, const TrainConfig& train,
                          const LossConfig& loss, Classifier* phi, const HistorySink& sink = {},
                          const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

// ---------------------------------------------------------------------------

struct ClassifierTrainResult {
  std::vector<nlohmann::json> history;
  double val_accuracy = 0.0;
  int best_epoch = 0;
};

/// Softmax cross-entropy training with Adam. Inputs are (N, C, S, S); labels
/// index classes. Keeps the parameters with the best validation accuracy.
/// Only crop augmentation is applied since a flip changes the class of a
/// directional action.
ClassifierTrainResult train_classifier(Classifier& net, const Tensor& train_x, std::span<const int> train_y,
                                       const Tensor& val_x, std::span<const int> val_y, const TrainConfig& config,
                                       const HistorySink& sink = {});

/// Predicted class per row and accuracy against labels.
std::vector<int> classify(const Classifier& net, const Tensor& x, int batch_size = 64);
double accuracy(std::span<const int> predicted, std::span<const int> labels);

struct ContentNetConfig {
  ClassifierConfig net;
  TrainConfig train{.batch_size = 32, .learning_rate = 1e-3, .epochs = 3, .flip = false};
};

/// The content network: a classifier over encoded ground-truth flows of the
/// training split, validated on the val split.
Classifier train_content_network(const Dataset& dataset, const ContentNetConfig& config,
                                 ClassifierTrainResult* result = nullptr, const HistorySink& sink = {});

}  // namespace im2flow
