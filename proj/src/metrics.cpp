#include "im2flow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>

namespace im2flow {

std::string_view mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::All: return "all";
    case MaskKind::Canny: return "canny";
    case MaskKind::Foreground: return "fg";
  }
  return "unknown";
}

MaskKind mask_kind_from_name(std::string_view name) {
  for (int k = 0; k < kNumMaskKinds; ++k)
    if (mask_kind_name(static_cast<MaskKind>(k)) == name) return static_cast<MaskKind>(k);
  throw ConfigError("unknown mask kind '" + std::string(name) + "' (expected all, canny or fg)");
}

void CannyParams::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("canny: sigma must be > 0");
  if (!(low > 0.0 && low < high)) throw ConfigError("canny: thresholds must satisfy 0 < low < high");
}

std::vector<MaskSpec> default_mask_specs() {
  return {{MaskKind::All, {}}, {MaskKind::Canny, {}}, {MaskKind::Foreground, {}}};
}

namespace {

void check_pair(const FlowField& pred, const FlowField& gt, const Mask& mask) {
  if (pred.width != gt.width || pred.height != gt.height || mask.width != gt.width || mask.height != gt.height)
    throw ConfigError("metrics: dimension mismatch between prediction, ground truth and mask");
}

}  // namespace

PixelMetrics compute_metrics(const FlowField& pred, const FlowField& gt, const Mask& mask, double eps) {
  check_pair(pred, gt, mask);
  PixelMetrics m;
  double epe_sum = 0.0, ds_sum = 0.0, os_sum = 0.0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!mask.bits[i]) continue;
    const double pu = pred.u[i], pv = pred.v[i], gu = gt.u[i], gv = gt.v[i];
    epe_sum += std::hypot(pu - gu, pv - gv);
    ++m.mask_pixels;
    const double gn = std::hypot(gu, gv);
    if (!(gn > eps)) continue;
    ++m.moving_pixels;
    const double pn = std::hypot(pu, pv);
    if (!(pn > eps)) continue;
    const double c = std::clamp((pu * gu + pv * gv) / (pn * gn), -1.0, 1.0);
    ds_sum += c;
    os_sum += std::abs(c);
  }
  if (m.mask_pixels == 0) throw NoEvaluatedPixels("no evaluated pixels: mask is empty");
  m.epe = epe_sum / static_cast<double>(m.mask_pixels);
  if (m.moving_pixels > 0) {
    m.ds = ds_sum / static_cast<double>(m.moving_pixels);
    m.os = os_sum / static_cast<double>(m.moving_pixels);
  }
  return m;
}

double epe(const FlowField& pred, const FlowField& gt, const Mask& mask) {
  return compute_metrics(pred, gt, mask).epe;
}

double direction_similarity(const FlowField& pred, const FlowField& gt, const Mask& mask, double eps) {
  const auto m = compute_metrics(pred, gt, mask, eps);
  if (m.moving_pixels == 0) throw NoEvaluatedPixels("no evaluated pixels: every masked ground-truth pixel is static");
  return m.ds;
}

double orientation_similarity(const FlowField& pred, const FlowField& gt, const Mask& mask, double eps) {
  const auto m = compute_metrics(pred, gt, mask, eps);
  if (m.moving_pixels == 0) throw NoEvaluatedPixels("no evaluated pixels: every masked ground-truth pixel is static");
  return m.os;
}

Mask canny_mask(const Image& image, const CannyParams& params) {
  params.validate();
  const Image gray = to_grayscale(image);
  const int W = gray.width, H = gray.height;
  const std::size_t N = gray.pixel_count();
  // Working in double relative to the minimum keeps the result exactly
  // invariant to representable intensity offsets.
  const double lo_val = *std::min_element(gray.data.begin(), gray.data.end());
  std::vector<double> img(N);
  for (std::size_t i = 0; i < N; ++i) img[i] = static_cast<double>(gray.data[i]) - lo_val;

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * params.sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int k = -radius; k <= radius; ++k) ksum += kernel[k + radius] = std::exp(-0.5 * k * k / (params.sigma * params.sigma));
  for (auto& k : kernel) k /= ksum;
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };

  std::vector<double> tmp(N), blur(N);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * img[y * W + clampi(x + k, W)];
      tmp[y * W + x] = s;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * tmp[clampi(y + k, H) * W + x];
      blur[y * W + x] = s;
    }

  std::vector<double> gx(N), gy(N), mag(N);
  double max_mag = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      gx[i] = 0.5 * (blur[y * W + clampi(x + 1, W)] - blur[y * W + clampi(x - 1, W)]);
      gy[i] = 0.5 * (blur[clampi(y + 1, H) * W + x] - blur[clampi(y - 1, H) * W + x]);
      mag[i] = std::hypot(gx[i], gy[i]);
      max_mag = std::max(max_mag, mag[i]);
    }
  Mask out(W, H, false);
  if (!(max_mag > 1e-9)) return out;

  // Non-maximum suppression along the gradient direction quantized to 4
  // sectors. Strict on one side so that plateaus keep a single pixel.
  std::vector<double> thin(N, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (mag[i] <= 0.0) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1, dy = 0;
      } else if (angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      auto at = [&](int yy, int xx) {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return mag[static_cast<std::size_t>(yy) * W + xx];
      };
      const double a = at(y + dy, x + dx), b = at(y - dy, x - dx);
      if (mag[i] > a && mag[i] >= b) thin[i] = mag[i];
    }

  const double high = params.high * max_mag, low = params.low * max_mag;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < N; ++i)
    if (thin[i] >= high) {
      out.bits[i] = 1;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int y = static_cast<int>(i / W), x = static_cast<int>(i % W);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        const std::size_t j = static_cast<std::size_t>(yy) * W + xx;
        if (!out.bits[j] && thin[j] >= low) {
          out.bits[j] = 1;
          queue.push_back(j);
        }
      }
  }
  return out;
}

Mask build_mask(const MaskSpec& spec, const Image& frame, const Mask* foreground) {
  switch (spec.kind) {
    case MaskKind::All: return Mask(frame.width, frame.height, true);
    case MaskKind::Canny: return canny_mask(frame, spec.canny);
    case MaskKind::Foreground:
      if (!foreground) throw ConfigError("fg mask requested but the sample has no foreground mask");
      return *foreground;
  }
  throw ConfigError("bad mask kind");
}

const MaskAggregate& MetricsReport::at(MaskKind kind) const {
  for (const auto& a : aggregates)
    if (a.kind == kind) return a;
  throw ConfigError("metrics report has no '" + std::string(mask_kind_name(kind)) + "' row");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["predictor"] = predictor;
  j["eval_epsilon"] = eval_epsilon;
  j["failures"] = failures;
  for (const auto& a : aggregates) {
    j["aggregate"][std::string(mask_kind_name(a.kind))] = {{"epe", a.epe},
                                                           {"ds", a.ds},
                                                           {"os", a.os},
                                                           {"epe_images", a.epe_images},
                                                           {"direction_images", a.direction_images},
                                                           {"pixels", a.pixels}};
  }
  auto& rows = j["images"] = nlohmann::json::array();
  for (const auto& im : images) {
    nlohmann::json r{{"id", im.id}};
    if (!im.error.empty()) r["error"] = im.error;
    for (int k = 0; k < kNumMaskKinds; ++k) {
      if (!im.masks[k]) continue;
      const auto& m = *im.masks[k];
      nlohmann::json mj{{"epe", m.epe}, {"pixels", m.mask_pixels}, {"moving_pixels", m.moving_pixels}};
      if (m.moving_pixels > 0) {
        mj["ds"] = m.ds;
        mj["os"] = m.os;
      }
      r[std::string(mask_kind_name(static_cast<MaskKind>(k)))] = mj;
    }
    rows.push_back(r);
  }
  return j;
}

MetricsReport evaluate(std::string predictor_name, const FlowPredictor& predictor,
                       std::span<const SyntheticSample> samples, std::span<const MaskSpec> masks, double eps) {
  if (masks.empty()) throw ConfigError("evaluate: no mask specs given");
  for (const auto& m : masks) m.canny.validate();
  MetricsReport report;
  report.predictor = std::move(predictor_name);
  report.eval_epsilon = eps;
  std::array<double, kNumMaskKinds> epe_sum{}, ds_sum{}, os_sum{};
  std::array<std::size_t, kNumMaskKinds> epe_n{}, dir_n{}, pix{};
  for (const auto& s : samples) {
    ImageMetrics row;
    row.id = s.id;
    FlowField pred;
    try {
      pred = predictor(s);
      pred.validate();
      if (pred.width != s.target.width || pred.height != s.target.height)
        throw ConfigError("prediction size " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                          " does not match ground truth");
    } catch (const std::exception& e) {
      row.error = e.what();
      ++report.failures;
      report.images.push_back(std::move(row));
      continue;
    }
    for (const auto& spec : masks) {
      const Mask mask = build_mask(spec, s.frame, s.mask.bits.empty() ? nullptr : &s.mask);
      if (mask.count() == 0) continue;
      const auto m = compute_metrics(pred, s.target, mask, eps);
      const int k = static_cast<int>(spec.kind);
      row.masks[k] = m;
      epe_sum[k] += m.epe;
      ++epe_n[k];
      pix[k] += m.mask_pixels;
      if (m.moving_pixels > 0) {
        ds_sum[k] += m.ds;
        os_sum[k] += m.os;
        ++dir_n[k];
      }
    }
    report.images.push_back(std::move(row));
  }
  for (const auto& spec : masks) {
    const int k = static_cast<int>(spec.kind);
    MaskAggregate a;
    a.kind = spec.kind;
    a.epe_images = epe_n[k];
    a.direction_images = dir_n[k];
    a.pixels = pix[k];
    if (epe_n[k] == 0)
      throw NoEvaluatedPixels("no evaluated pixels for mask '" + std::string(mask_kind_name(spec.kind)) +
                              "' on any image");
    a.epe = epe_sum[k] / static_cast<double>(epe_n[k]);
    if (dir_n[k] > 0) {
      a.ds = ds_sum[k] / static_cast<double>(dir_n[k]);
      a.os = os_sum[k] / static_cast<double>(dir_n[k]);
    }
    report.aggregates.push_back(a);
  }
  return report;
}

std::string format_metrics_table(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  if (reports.empty()) return "";
  const auto& kinds = reports.front().aggregates;
  std::size_t name_w = 9;
  for (const auto& r : reports) name_w = std::max(name_w, r.predictor.size());
  char buf[128];
  out << std::string(name_w, ' ');
  for (const auto& a : kinds) {
    std::snprintf(buf, sizeof buf, " | %-23s", std::string(mask_kind_name(a.kind)).c_str());
    out << buf;
  }
  out << "\n" << std::string(name_w, ' ');
  for (std::size_t i = 0; i < kinds.size(); ++i) out << " |     EPE      DS      OS";
  out << "\n";
  for (const auto& r : reports) {
    out << r.predictor << std::string(name_w - r.predictor.size(), ' ');
    for (const auto& a : r.aggregates) {
      std::snprintf(buf, sizeof buf, " | %7.3f %7.3f %7.3f", a.epe, a.ds, a.os);
      out << buf;
    }
    if (r.failures > 0) out << "   (" << r.failures << " failed)";
    out << "\n";
  }
  return out.str();
}

}  // namespace im2flow
