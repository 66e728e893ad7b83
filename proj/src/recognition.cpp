#include "im2flow/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "im2flow/error.hpp"

namespace im2flow {

std::string_view stream_name(StreamKind kind) { return kind == StreamKind::Appearance ? "appearance" : "motion"; }

std::string_view motion_source_name(MotionSource source) {
  return source == MotionSource::Hallucinated ? "hallucinated" : "ground_truth";
}

Tensor appearance_inputs(std::span<const SyntheticSample> samples) {
  std::vector<Image> images;
  for (const auto& s : samples) images.push_back(s.frame);
  return images_to_tensor(images);
}

Tensor motion_inputs(std::span<const SyntheticSample> samples, MotionSource source, const Im2FlowModel* model) {
  std::vector<EncodedFlow> enc;
  if (source == MotionSource::GroundTruth) {
    for (const auto& s : samples) enc.push_back(encode_flow(s.target));
  } else {
    if (!model) throw ConfigError("motion_inputs: hallucinated flow needs an Im2Flow model");
    std::vector<Image> images;
    for (const auto& s : samples) images.push_back(s.frame);
    enc = predict_encoded(*model, images);
  }
  return encoded_to_tensor(enc);
}

std::vector<int> sample_labels(std::span<const SyntheticSample> samples) {
  std::vector<int> y;
  for (const auto& s : samples) y.push_back(static_cast<int>(s.label));
  return y;
}

StreamClassifier train_stream(StreamKind kind, const Tensor& train_x, std::span<const int> train_y,
                              const Tensor& val_x, std::span<const int> val_y, const ClassifierConfig& net,
                              const TrainConfig& train, const HistorySink& sink) {
  StreamClassifier s;
  s.kind = kind;
  ClassifierConfig c = net;
  c.in_channels = train_x.c();
  s.net = Classifier(c);
  s.val_accuracy = train_classifier(s.net, train_x, train_y, val_x, val_y, train, sink).val_accuracy;
  return s;
}

Probabilities stream_probabilities(const Classifier& net, const Tensor& x, int batch_size) {
  Probabilities out;
  const std::size_t ss = x.sample_size();
  for (int n0 = 0; n0 < x.n(); n0 += batch_size) {
    const int nb = std::min(batch_size, x.n() - n0);
    Tensor b(nb, x.c(), x.h(), x.w());
    std::copy_n(x.data() + n0 * ss, nb * ss, b.data());
    for (auto& row : softmax_rows(net.infer(b))) out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> fuse(std::span<const double> p_app, std::span<const double> p_mot, double w) {
  if (p_app.size() != p_mot.size())
    throw ConfigError("fuse: length mismatch (" + std::to_string(p_app.size()) + " vs " +
                      std::to_string(p_mot.size()) + ")");
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("fuse: weight must lie in [0, 1]");
  std::vector<double> out(p_app.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = w * p_app[k] + (1.0 - w) * p_mot[k];
  return out;
}

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw ConfigError("argmax: empty score vector");
  int best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = static_cast<int>(k);
  return best;
}

std::vector<int> fused_predictions(const Probabilities& p_app, const Probabilities& p_mot, double w) {
  if (p_app.size() != p_mot.size()) throw ConfigError("fused_predictions: sample count mismatch");
  std::vector<int> out;
  out.reserve(p_app.size());
  for (std::size_t i = 0; i < p_app.size(); ++i) out.push_back(argmax(fuse(p_app[i], p_mot[i], w)));
  return out;
}

FusionSelection select_fusion_weight(const Probabilities& p_app, const Probabilities& p_mot,
                                     std::span<const int> labels) {
  if (labels.empty()) throw ConfigError("select_fusion_weight: empty validation set");
  if (p_app.size() != labels.size() || p_mot.size() != labels.size())
    throw ConfigError("select_fusion_weight: prediction/label count mismatch");
  FusionSelection sel;
  sel.accuracy = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double w = k / 20.0;
    const double acc = accuracy(fused_predictions(p_app, p_mot, w), labels);
    sel.grid.push_back(w);
    sel.grid_accuracy.push_back(acc);
    if (acc > sel.accuracy) {
      sel.accuracy = acc;
      sel.weight = w;
    }
  }
  return sel;
}

std::vector<std::vector<float>> bottleneck_feature_rows(const Im2FlowModel& model, std::span<const Image> images,
                                                        int batch_size) {
  std::vector<std::vector<float>> rows;
  for (std::size_t i = 0; i < images.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto n = std::min(images.size() - i, static_cast<std::size_t>(batch_size));
    const Tensor f = model.bottleneck_features(images_to_tensor(images.subspan(i, n)));
    for (int r = 0; r < f.n(); ++r) rows.emplace_back(f.sample(r).begin(), f.sample(r).end());
  }
  return rows;
}

NearestNeighborBaseline::NearestNeighborBaseline(const Im2FlowModel& model, std::span<const SyntheticSample> pool) {
  if (pool.empty()) throw ConfigError("nn baseline: empty training pool");
  std::vector<Image> images;
  for (const auto& s : pool) {
    images.push_back(s.frame);
    flows_.push_back(s.target);
  }
  features_ = bottleneck_feature_rows(model, images);
}

NearestNeighborBaseline::NearestNeighborBaseline(std::vector<std::vector<float>> features,
                                                 std::vector<FlowField> flows)
    : features_(std::move(features)), flows_(std::move(flows)) {
  if (features_.empty()) throw ConfigError("nn baseline: empty training pool");
  if (features_.size() != flows_.size()) throw ConfigError("nn baseline: feature/flow count mismatch");
  for (const auto& f : features_)
    if (f.size() != features_.front().size()) throw ConfigError("nn baseline: inconsistent feature dimensions");
}

std::size_t NearestNeighborBaseline::nearest(std::span<const float> feature) const {
  if (feature.size() != feature_size())
    throw ConfigError("nn baseline: feature-dimension mismatch (" + std::to_string(feature.size()) + " vs " +
                      std::to_string(feature_size()) + ")");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    double d = 0.0;
    const auto& f = features_[i];
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double diff = static_cast<double>(f[k]) - feature[k];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

FlowField NearestNeighborBaseline::query(const Im2FlowModel& model, const Image& image) const {
  const Tensor f = model.bottleneck_features(image_to_tensor(image));
  return query(f.sample(0));
}

std::vector<RankedItem> rank_by_motion_potential(std::span<const Image> images, const Im2FlowModel& model,
                                                 std::span<const Mask> masks) {
  if (!masks.empty() && masks.size() != images.size())
    throw ConfigError("rank_by_motion_potential: mask count does not match image count");
  const auto enc = predict_encoded(model, images);
  std::vector<RankedItem> items;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Mask all(images[i].width, images[i].height, true);
    items.push_back({i, motion_potential(enc[i], masks.empty() ? all : masks[i])});
  }
  std::stable_sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) { return a.score > b.score; });
  return items;
}

ConfusionMatrix ConfusionMatrix::build(std::span<const int> predicted, std::span<const int> labels, int num_classes) {
  if (predicted.size() != labels.size()) throw ConfigError("confusion matrix: size mismatch");
  ConfusionMatrix m;
  m.num_classes = num_classes;
  m.counts.assign(num_classes, std::vector<int>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
      throw ConfigError("confusion matrix: class index out of range");
    ++m.counts[labels[i]][predicted[i]];
  }
  return m;
}

double ConfusionMatrix::accuracy() const {
  long hit = 0, total = 0;
  for (int i = 0; i < num_classes; ++i)
    for (int j = 0; j < num_classes; ++j) {
      total += counts[i][j];
      if (i == j) hit += counts[i][j];
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json j;
  std::vector<std::string> names;
  for (int k = 0; k < num_classes; ++k)
    names.emplace_back(k < kNumActionClasses ? std::string(action_name(static_cast<ActionClass>(k))) : std::to_string(k));
  j["classes"] = names;
  j["counts"] = counts;
  j["accuracy"] = accuracy();
  return j;
}

std::array<double, kNumAmbiguousPairs> pair_accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ConfigError("pair_accuracy: size mismatch");
  std::array<int, kNumAmbiguousPairs> hit{}, total{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = labels[i] / 2;
    if (p < 0 || p >= kNumAmbiguousPairs) continue;
    ++total[p];
    hit[p] += predicted[i] == labels[i];
  }
  std::array<double, kNumAmbiguousPairs> out;
  for (int p = 0; p < kNumAmbiguousPairs; ++p)
    out[p] = total[p] ? static_cast<double>(hit[p]) / total[p] : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace im2flow
