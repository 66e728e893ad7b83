#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "im2flow/classifier.hpp"
#include "im2flow/model.hpp"
#include "im2flow/synthdata.hpp"
#include "im2flow/training.hpp"

namespace im2flow {

enum class StreamKind : int { Appearance = 0, Motion };
std::string_view stream_name(StreamKind kind);

/// What the motion stream is fed.
enum class MotionSource : int { Hallucinated = 0, GroundTruth };
std::string_view motion_source_name(MotionSource source);

struct StreamClassifier {
  StreamKind kind = StreamKind::Appearance;
  Classifier net;
  double val_accuracy = 0.0;
};

using Probabilities = std::vector<std::vector<double>>;

/// Stream inputs: images for the appearance stream, encoded flows for the
/// motion stream (predicted by a frozen model or taken from ground truth).
Tensor appearance_inputs(std::span<const SyntheticSample> samples);
Tensor motion_inputs(std::span<const SyntheticSample> samples, MotionSource source, const Im2FlowModel* model);
std::vector<int> sample_labels(std::span<const SyntheticSample> samples);

StreamClassifier train_stream(StreamKind kind, const Tensor& train_x, std::span<const int> train_y,
                              const Tensor& val_x, std::span<const int> val_y, const ClassifierConfig& net,
                              const TrainConfig& train, const HistorySink& sink = {});

/// Softmax scores per sample.
Probabilities stream_probabilities(const Classifier& net, const Tensor& x, int batch_size = 64);

/// w * p_app + (1 - w) * p_mot.
std::vector<double> fuse(std::span<const double> p_app, std::span<const double> p_mot, double w);

/// Index of the largest score; ties go to the lowest index.
int argmax(std::span<const double> scores);

std::vector<int> fused_predictions(const Probabilities& p_app, const Probabilities& p_mot, double w);

struct FusionSelection {
  double weight = 0.0;
  double accuracy = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_accuracy;
};

/// Grid search over w in {0, 0.05, ..., 1}; ties go to the smallest w.
FusionSelection select_fusion_weight(const Probabilities& p_app, const Probabilities& p_mot,
                                     std::span<const int> labels);

/// Flow transfer from the nearest training frame in the frozen model's
/// bottleneck feature space.
class NearestNeighborBaseline {
 public:
  NearestNeighborBaseline(const Im2FlowModel& model, std::span<const SyntheticSample> pool);
  /// From precomputed features (one row each) and their flows.
  NearestNeighborBaseline(std::vector<std::vector<float>> features, std::vector<FlowField> flows);

  std::size_t pool_size() const { return flows_.size(); }
  std::size_t feature_size() const { return features_.empty() ? 0 : features_.front().size(); }

  /// Index of the L2-nearest pool entry; ties go to the lowest index.
  std::size_t nearest(std::span<const float> feature) const;
  FlowField query(std::span<const float> feature) const { return flows_[nearest(feature)]; }
  FlowField query(const Im2FlowModel& model, const Image& image) const;

 private:
  std::vector<std::vector<float>> features_;
  std::vector<FlowField> flows_;
};

std::vector<std::vector<float>> bottleneck_feature_rows(const Im2FlowModel& model, std::span<const Image> images,
                                                        int batch_size = 32);

struct RankedItem {
  std::size_t index = 0;
  double score = 0.0;
};

/// Motion potential of the predicted flow per image, sorted descending with
/// ties kept in input order. An empty `masks` span uses whole-image masks.
std::vector<RankedItem> rank_by_motion_potential(std::span<const Image> images, const Im2FlowModel& model,
                                                 std::span<const Mask> masks);

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::vector<int>> counts;  // [true][predicted]

  static ConfusionMatrix build(std::span<const int> predicted, std::span<const int> labels, int num_classes);
  double accuracy() const;
  nlohmann::json to_json() const;
};

/// Accuracy restricted to samples whose true class lies in each ambiguous
/// pair (8-way prediction). Pairs with no samples report NaN.
std::array<double, kNumAmbiguousPairs> pair_accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace im2flow
