#include "im2flow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "im2flow/checkpoint.hpp"
#include "im2flow/error.hpp"
#include "im2flow/metrics.hpp"

namespace im2flow {

std::string_view weighting_name(PixelWeighting w) {
  return w == PixelWeighting::Uniform ? "uniform" : "magnitude";
}

PixelWeighting weighting_from_name(std::string_view name) {
  if (name == "uniform") return PixelWeighting::Uniform;
  if (name == "magnitude" || name == "magnitude-weighted") return PixelWeighting::MagnitudeWeighted;
  throw ConfigError("unknown pixel weighting '" + std::string(name) + "' (expected uniform or magnitude)");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("loss config: lambda must be finite and >= 0");
  if (content_layer < 1 || content_layer > Classifier::kBlocks)
    throw ConfigError("loss config: content_layer must be in [1, 3], got " + std::to_string(content_layer));
}

GradcheckResult gradcheck(const LossWithGrad& fn, const nn::Tensor<double>& x, double eps, double floor) {
  if (x.h() > 4 || x.w() > 4) throw ConfigError("gradcheck: spatial size must be <= 4x4, got " + x.shape_string());
  GradcheckResult r;
  fn(x, &r.analytic);
  if (!r.analytic.same_shape(x)) throw ConfigError("gradcheck: gradient shape mismatch");
  r.numeric = nn::Tensor<double>(x.n(), x.c(), x.h(), x.w());
  nn::Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = fn(probe, nullptr);
    probe[i] = x[i] - eps;
    const double down = fn(probe, nullptr);
    probe[i] = x[i];
    const double num = (up - down) / (2.0 * eps);
    r.numeric[i] = num;
    const double a = r.analytic[i];
    const double abs_err = std::abs(a - num);
    const double rel = abs_err / std::max({std::abs(a), std::abs(num), floor});
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train config: adam betas must lie in [0, 1)");
  if (crop_pad < 0) throw ConfigError("train config: crop_pad must be >= 0");
}

nn::AdamConfig TrainConfig::adam() const {
  nn::AdamConfig a;
  a.learning_rate = learning_rate;
  a.beta1 = beta1;
  a.beta2 = beta2;
  return a;
}

FlowTrainingData make_flow_data(std::span<const SyntheticSample> samples) {
  if (samples.empty()) throw ConfigError("training data: empty split");
  FlowTrainingData d;
  std::vector<Image> images;
  std::vector<EncodedFlow> enc;
  images.reserve(samples.size());
  enc.reserve(samples.size());
  for (const auto& s : samples) {
    images.push_back(s.frame);
    enc.push_back(encode_flow(s.target));
    d.flows.push_back(s.target);
    d.labels.push_back(static_cast<int>(s.label));
  }
  d.images = images_to_tensor(images);
  d.targets = encoded_to_tensor(enc);
  return d;
}

void channel_stats(const Tensor& batch, std::vector<double>& mean, std::vector<double>& stddev) {
  mean.assign(batch.c(), 0.0);
  stddev.assign(batch.c(), 1.0);
  const double count = static_cast<double>(batch.n()) * batch.plane_size();
  for (int c = 0; c < batch.c(); ++c) {
    double s = 0.0;
    for (int n = 0; n < batch.n(); ++n)
      for (float v : batch.plane(n, c)) s += v;
    const double m = s / count;
    double q = 0.0;
    for (int n = 0; n < batch.n(); ++n)
      for (float v : batch.plane(n, c)) q += (v - m) * (v - m);
    mean[c] = m;
    stddev[c] = std::max(std::sqrt(q / count), 1e-6);
  }
}

float magnitude_quantile(std::span<const SyntheticSample> samples, double q, float epsilon) {
  std::vector<float> mags;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.target.pixel_count(); ++i) {
      const float m = std::hypot(s.target.u[i], s.target.v[i]);
      if (m > epsilon) mags.push_back(m);
    }
  if (mags.empty()) return 1.0f;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
  return mags[k];
}

Im2FlowModel make_model_for(const ModelConfig& config, std::span<const SyntheticSample> train) {
  if (train.empty()) throw ConfigError("make_model_for: empty training split");
  if (train.front().frame.width != config.input_size)
    throw ConfigError("model input_size " + std::to_string(config.input_size) + " does not match dataset image size " +
                      std::to_string(train.front().frame.width));
  Im2FlowModel model(config, magnitude_quantile(train));
  std::vector<Image> images;
  for (const auto& s : train) images.push_back(s.frame);
  std::vector<double> mean, stddev;
  channel_stats(images_to_tensor(images), mean, stddev);
  model.set_input_stats(std::move(mean), std::move(stddev));
  // median target magnitude over all pixels
  std::vector<float> mags;
  for (const auto& s : train)
    for (std::size_t i = 0; i < s.target.pixel_count(); ++i) mags.push_back(std::hypot(s.target.u[i], s.target.v[i]));
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  model.set_magnitude_prior(*mid);
  return model;
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

// Reflect-pads by `pad` and takes the window at offset (ox, oy), returning
// the same size.
void crop_plane(std::span<const float> src, std::span<float> dst, int w, int h, int pad, int ox, int oy) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      dst[static_cast<std::size_t>(y) * w + x] = src[static_cast<std::size_t>(reflect(y + oy - pad, h)) * w +
                                                     reflect(x + ox - pad, w)];
}

struct CropDraw {
  bool flip = false;
  int ox = 0, oy = 0;
};

CropDraw draw_transform(const TrainConfig& config, int epoch, int index) {
  Rng rng(Rng::derive(config.seed, 0xa06, epoch, index));
  CropDraw d;
  d.flip = rng.coin() && config.flip;
  if (config.crop && config.crop_pad > 0) {
    d.ox = static_cast<int>(rng.below(2 * config.crop_pad + 1));
    d.oy = static_cast<int>(rng.below(2 * config.crop_pad + 1));
  } else {
    d.ox = d.oy = config.crop_pad;
  }
  return d;
}

std::vector<int> epoch_order(std::uint64_t seed, int epoch, int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, 0x0de, epoch));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return order;
}

struct Snapshot {
  std::vector<nn::Tensor<float>> params, buffers;
};

template <typename Net>
Snapshot snapshot(Net& net) {
  Snapshot s;
  for (auto* p : net.parameters()) s.params.push_back(p->value);
  for (auto* b : net.buffers()) s.buffers.push_back(b->value);
  return s;
}

template <typename Net>
void restore(Net& net, const Snapshot& s) {
  auto ps = net.parameters();
  auto bs = net.buffers();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.params[i];
  for (std::size_t i = 0; i < bs.size(); ++i) bs[i]->value = s.buffers[i];
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void augment_pair(const TrainConfig& config, int epoch, int index, Image& image, FlowField& flow) {
  const CropDraw d = draw_transform(config, epoch, index);
  if (d.flip) {
    image = flip_horizontal(image);
    flow = flip_horizontal(flow);
  }
  if (config.crop && config.crop_pad > 0) {
    const int p = config.crop_pad;
    Image im(image.width, image.height, image.channels);
    for (int c = 0; c < image.channels; ++c) crop_plane(image.plane(c), im.plane(c), image.width, image.height, p, d.ox, d.oy);
    FlowField f(flow.width, flow.height);
    crop_plane(flow.u, f.u, flow.width, flow.height, p, d.ox, d.oy);
    crop_plane(flow.v, f.v, flow.width, flow.height, p, d.ox, d.oy);
    image = std::move(im);
    flow = std::move(f);
  }
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"train", {{"pixel", number_or_null(train_pixel)}, {"content", number_or_null(train_content)},
                     {"total", number_or_null(train_total)}}},
          {"val", {{"pixel", number_or_null(val_pixel)}, {"content", number_or_null(val_content)},
                   {"total", number_or_null(val_total)}, {"epe", number_or_null(val_epe)}}},
          {"seconds", seconds}};
}

EpochRecord evaluate_losses(const Im2FlowModel& model, const FlowTrainingData& data, Classifier* phi,
                            const LossConfig& loss, int batch_size) {
  EpochRecord r;
  const int N = data.images.n();
  const std::size_t img_size = data.images.sample_size(), tgt_size = data.targets.sample_size();
  const int S = data.images.h();
  double pix = 0.0, con = 0.0, tot = 0.0, epe_sum = 0.0;
  const Mask all(S, S, true);
  for (int n0 = 0; n0 < N; n0 += batch_size) {
    const int nb = std::min(batch_size, N - n0);
    Tensor x(nb, data.images.c(), S, S), t(nb, 3, S, S);
    std::copy_n(data.images.data() + n0 * img_size, nb * img_size, x.data());
    std::copy_n(data.targets.data() + n0 * tgt_size, nb * tgt_size, t.data());
    const Tensor pred = model.infer(x);
    const auto l = total_loss<float>(pred, t, phi, loss);
    pix += static_cast<double>(l.pixel) * nb;
    con += static_cast<double>(l.content) * nb;
    tot += static_cast<double>(l.total) * nb;
    const auto enc = tensor_to_encoded(pred);
    for (int i = 0; i < nb; ++i) epe_sum += compute_metrics(decode_flow(enc[i]), data.flows[n0 + i], all).epe;
  }
  r.val_pixel = pix / N;
  r.val_content = con / N;
  r.val_total = tot / N;
  r.val_epe = epe_sum / N;
  r.train_pixel = r.train_content = r.train_total = std::numeric_limits<double>::quiet_NaN();
  return r;
}

TrainResult train_im2flow(const Dataset& dataset, Im2FlowModel& model, const TrainConfig& train,
                          const LossConfig& loss, Classifier* phi, const HistorySink& sink,
                          const std::optional<std::filesystem::path>& checkpoint) {
  train.validate();
  loss.validate();
  if (dataset.train.empty()) throw ConfigError("train_im2flow: empty training split");
  if (dataset.val.empty()) throw ConfigError("train_im2flow: empty validation split");
  if (loss.lambda > 0.0 && !phi) throw ConfigError("train_im2flow: lambda > 0 requires a content network");
  const int S = model.config().input_size;
  for (const auto* split : {&dataset.train, &dataset.val})
    for (const auto& s : *split)
      if (s.frame.width != S || s.frame.height != S || s.frame.channels != model.config().in_channels)
        throw ConfigError("train_im2flow: sample " + s.id + " does not match the model input shape");

  const FlowTrainingData val = make_flow_data(dataset.val);
  TrainResult result;
  auto t0 = std::chrono::steady_clock::now();
  EpochRecord r0 = evaluate_losses(model, val, phi, loss);
  r0.epoch = 0;
  r0.seconds = seconds_since(t0);
  result.history.push_back(r0);
  if (sink) sink(r0.to_json());
  result.best_epoch = 0;
  result.best_val_epe = r0.val_epe;
  Snapshot best = snapshot(model);

  nn::Adam opt(model.parameters(), train.adam());
  const int N = static_cast<int>(dataset.train.size());
  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(train.seed, epoch, N);
    double pix = 0.0, con = 0.0, tot = 0.0;
    for (int b0 = 0, batch = 0; b0 < N; b0 += train.batch_size, ++batch) {
      const int nb = std::min(train.batch_size, N - b0);
      std::vector<Image> images;
      std::vector<EncodedFlow> targets;
      for (int i = 0; i < nb; ++i) {
        const int idx = order[b0 + i];
        Image im = dataset.train[idx].frame;
        FlowField f = dataset.train[idx].target;
        augment_pair(train, epoch, idx, im, f);
        images.push_back(std::move(im));
        targets.push_back(encode_flow(f));
      }
      const Tensor x = images_to_tensor(images);
      const Tensor t = encoded_to_tensor(targets);
      opt.zero_grad();
      const Tensor pred = model.forward(x, nn::Mode::Train);
      Tensor grad;
      const auto l = total_loss<float>(pred, t, phi, loss, &grad);
      if (!std::isfinite(l.total)) {
        restore(model, best);
        std::string msg = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                          " (pixel " + std::to_string(l.pixel) + ", content " + std::to_string(l.content) +
                          "); restored parameters from epoch " + std::to_string(result.best_epoch);
        if (checkpoint) {
          save_checkpoint(model, *checkpoint);
          msg += ", written to " + checkpoint->string();
        }
        throw NumericalError(msg);
      }
      model.backward(grad);
      opt.step();
      pix += static_cast<double>(l.pixel) * nb;
      con += static_cast<double>(l.content) * nb;
      tot += static_cast<double>(l.total) * nb;
    }
    EpochRecord r = evaluate_losses(model, val, phi, loss);
    r.epoch = epoch;
    r.train_pixel = pix / N;
    r.train_content = con / N;
    r.train_total = tot / N;
    r.seconds = seconds_since(t0);
    result.history.push_back(r);
    if (sink) sink(r.to_json());
    if (r.val_epe < result.best_val_epe) {
      result.best_val_epe = r.val_epe;
      result.best_epoch = epoch;
      best = snapshot(model);
      if (checkpoint) save_checkpoint(model, *checkpoint);
    }
  }
  restore(model, best);
  if (checkpoint && result.best_epoch == 0) save_checkpoint(model, *checkpoint);
  return result;
}

std::vector<int> classify(const Classifier& net, const Tensor& x, int batch_size) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.n()));
  const std::size_t ss = x.sample_size();
  for (int n0 = 0; n0 < x.n(); n0 += batch_size) {
    const int nb = std::min(batch_size, x.n() - n0);
    Tensor b(nb, x.c(), x.h(), x.w());
    std::copy_n(x.data() + n0 * ss, nb * ss, b.data());
    const Tensor logits = net.infer(b);
    for (int i = 0; i < nb; ++i) {
      int best = 0;
      for (int k = 1; k < logits.c(); ++k)
        if (logits.at(i, k, 0, 0) > logits.at(i, best, 0, 0)) best = k;
      out.push_back(best);
    }
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ConfigError("accuracy: size mismatch");
  if (labels.empty()) throw ConfigError("accuracy: empty label set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

ClassifierTrainResult train_classifier(Classifier& net, const Tensor& train_x, std::span<const int> train_y,
                                       const Tensor& val_x, std::span<const int> val_y, const TrainConfig& config,
                                       const HistorySink& sink) {
  config.validate();
  if (static_cast<std::size_t>(train_x.n()) != train_y.size() || static_cast<std::size_t>(val_x.n()) != val_y.size())
    throw ConfigError("train_classifier: label/input count mismatch");
  if (train_y.empty() || val_y.empty()) throw ConfigError("train_classifier: empty split");
  const int K = net.config().num_classes;
  std::vector<int> seen;
  for (int y : train_y) {
    if (y < 0 || y >= K) throw ConfigError("train_classifier: label " + std::to_string(y) + " out of range");
    if (std::find(seen.begin(), seen.end(), y) == seen.end()) seen.push_back(y);
  }
  if (seen.size() < 2) throw ConfigError("train_classifier: single-class data, need at least 2 classes");

  std::vector<double> mean, stddev;
  channel_stats(train_x, mean, stddev);
  net.set_input_stats(mean, stddev);

  ClassifierTrainResult result;
  nn::Adam opt(net.parameters(), config.adam());
  const int N = train_x.n(), C = train_x.c(), H = train_x.h(), W = train_x.w();
  const std::size_t ss = train_x.sample_size();
  result.val_accuracy = -1.0;
  Snapshot best = snapshot(net);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(config.seed, epoch, N);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (int b0 = 0; b0 < N; b0 += config.batch_size) {
      const int nb = std::min(config.batch_size, N - b0);
      Tensor x(nb, C, H, W);
      for (int i = 0; i < nb; ++i) {
        const int idx = order[b0 + i];
        std::span<const float> src{train_x.data() + idx * ss, ss};
        auto dst = x.sample(i);
        if (config.crop && config.crop_pad > 0) {
          const CropDraw d = draw_transform(config, epoch, idx);
          const std::size_t P = static_cast<std::size_t>(H) * W;
          for (int c = 0; c < C; ++c)
            crop_plane(src.subspan(c * P, P), dst.subspan(c * P, P), W, H, config.crop_pad, d.ox, d.oy);
        } else {
          std::copy(src.begin(), src.end(), dst.begin());
        }
      }
      opt.zero_grad();
      const Tensor logits = net.forward(x, nn::Mode::Train);
      Tensor dlogits(nb, K, 1, 1);
      for (int i = 0; i < nb; ++i) {
        const int y = train_y[order[b0 + i]];
        double mx = logits.at(i, 0, 0, 0);
        int arg = 0;
        for (int k = 1; k < K; ++k)
          if (logits.at(i, k, 0, 0) > mx) mx = logits.at(i, k, 0, 0), arg = k;
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(logits.at(i, k, 0, 0) - mx);
        loss_sum += std::log(z) - (logits.at(i, y, 0, 0) - mx);
        hits += arg == y;
        for (int k = 0; k < K; ++k) {
          const double p = std::exp(logits.at(i, k, 0, 0) - mx) / z;
          dlogits.at(i, k, 0, 0) = static_cast<float>((p - (k == y ? 1.0 : 0.0)) / nb);
        }
      }
      if (!std::isfinite(loss_sum)) throw NumericalError("train_classifier: non-finite loss at epoch " + std::to_string(epoch));
      net.backward(dlogits);
      opt.step();
    }
    const double val_acc = accuracy(classify(net, val_x), val_y);
    nlohmann::json rec{{"epoch", epoch},
                       {"train_loss", loss_sum / N},
                       {"train_accuracy", static_cast<double>(hits) / N},
                       {"val_accuracy", val_acc}};
    result.history.push_back(rec);
    if (sink) sink(rec);
    if (val_acc > result.val_accuracy) {
      result.val_accuracy = val_acc;
      result.best_epoch = epoch;
      best = snapshot(net);
    }
  }
  restore(net, best);
  return result;
}

Classifier train_content_network(const Dataset& dataset, const ContentNetConfig& config,
                                 ClassifierTrainResult* result, const HistorySink& sink) {
  ClassifierConfig net_config = config.net;
  net_config.in_channels = 3;
  const FlowTrainingData train = make_flow_data(dataset.train);
  const FlowTrainingData val = make_flow_data(dataset.val);
  Classifier net(net_config);
  auto r = train_classifier(net, train.targets, train.labels, val.targets, val.labels, config.train, sink);
  if (result) *result = std::move(r);
  return net;
}

}  // namespace im2flow
