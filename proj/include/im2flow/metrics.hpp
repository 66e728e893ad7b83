#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "im2flow/error.hpp"
#include "im2flow/flow_core.hpp"
#include "im2flow/image.hpp"
#include "im2flow/synthdata.hpp"

namespace im2flow {

/// A metric was requested over a mask with no eligible pixels.
class NoEvaluatedPixels : public Error {
 public:
  using Error::Error;
};

enum class MaskKind : int { All = 0, Canny, Foreground };
inline constexpr int kNumMaskKinds = 3;
std::string_view mask_kind_name(MaskKind kind);
MaskKind mask_kind_from_name(std::string_view name);

struct CannyParams {
  double sigma = 1.4;
  double low = 0.1;   // fraction of the maximum gradient magnitude
  double high = 0.25;

  void validate() const;
};

struct MaskSpec {
  MaskKind kind = MaskKind::All;
  CannyParams canny;
};

std::vector<MaskSpec> default_mask_specs();

inline constexpr double kDefaultEvalEpsilon = 1e-3;

/// Mean end-point error over masked pixels.
double epe(const FlowField& pred, const FlowField& gt, const Mask& mask);
/// Mean cosine between pred and gt over masked pixels with |gt| > eps; a pred
/// with |pred| <= eps scores 0.
double direction_similarity(const FlowField& pred, const FlowField& gt, const Mask& mask,
                            double eps = kDefaultEvalEpsilon);
/// As direction_similarity with |cos|.
double orientation_similarity(const FlowField& pred, const FlowField& gt, const Mask& mask,
                              double eps = kDefaultEvalEpsilon);

struct PixelMetrics {
  double epe = 0.0;
  double ds = 0.0;
  double os = 0.0;
  std::size_t mask_pixels = 0;    // pixels entering EPE
  std::size_t moving_pixels = 0;  // pixels entering DS and OS
};

/// All three metrics in one pass. Throws NoEvaluatedPixels on an empty mask;
/// ds/os are left at 0 with moving_pixels == 0 when no gt pixel moves.
PixelMetrics compute_metrics(const FlowField& pred, const FlowField& gt, const Mask& mask,
                             double eps = kDefaultEvalEpsilon);

/// Gaussian blur, central-difference gradients, non-maximum suppression and
/// hysteresis. Thresholds are relative to the largest gradient magnitude.
Mask canny_mask(const Image& image, const CannyParams& params = {});

/// Mask for one sample under a spec: all pixels, Canny edges of the frame or
/// the provided foreground mask.
Mask build_mask(const MaskSpec& spec, const Image& frame, const Mask* foreground);

/// Maps a sample to a predicted flow. Predictors must only look at
/// sample.frame; the oracle predictor used in tests is the exception.
using FlowPredictor = std::function<FlowField(const SyntheticSample&)>;

struct MaskAggregate {
  MaskKind kind = MaskKind::All;
  double epe = 0.0;
  double ds = 0.0;
  double os = 0.0;
  std::size_t epe_images = 0;        // images entering the EPE mean
  std::size_t direction_images = 0;  // images entering the DS/OS means
  std::size_t pixels = 0;            // evaluated pixels summed over images
};

struct ImageMetrics {
  std::string id;
  std::string error;  // empty unless the predictor failed
  std::array<std::optional<PixelMetrics>, kNumMaskKinds> masks;
};

struct MetricsReport {
  std::string predictor;
  double eval_epsilon = kDefaultEvalEpsilon;
  std::vector<MaskAggregate> aggregates;
  std::vector<ImageMetrics> images;
  std::size_t failures = 0;

  /// Throws ConfigError if the mask kind was not evaluated.
  const MaskAggregate& at(MaskKind kind) const;
  nlohmann::json to_json() const;
};

/// Per-image metrics for every mask spec, then the mean over images with at
/// least one evaluated pixel. Predictor exceptions are recorded per image.
MetricsReport evaluate(std::string predictor_name, const FlowPredictor& predictor,
                       std::span<const SyntheticSample> samples, std::span<const MaskSpec> masks,
                       double eps = kDefaultEvalEpsilon);

/// Rows of predictors, EPE/DS/OS column groups per mask kind.
std::string format_metrics_table(std::span<const MetricsReport> reports);

}  // namespace im2flow
