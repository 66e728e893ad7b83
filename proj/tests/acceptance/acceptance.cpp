// End-to-end acceptance suite. Criteria 1-4 run in-process against the
// library; 5-9 drive the CLI binary in a scratch directory. Prints one
// PASS/FAIL line per criterion and exits nonzero if any fails.

#include <sys/resource.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "im2flow/error.hpp"
#include "im2flow/flow_core.hpp"
#include "im2flow/flow_io.hpp"
#include "im2flow/metrics.hpp"
#include "im2flow/rng.hpp"
#include "im2flow/synthdata.hpp"
#include "im2flow/training.hpp"

using namespace im2flow;
namespace fs = std::filesystem;
using json = nlohmann::json;
using D = nn::Tensor<double>;

namespace {

// Pinned tolerances and budgets.
constexpr double kEncodeTol = 1e-6;
constexpr double kGradTol = 1e-3;
constexpr double kMetricTol = 1e-6;
constexpr double kRepeatTol = 1e-3;
constexpr double kCriterion1Seconds = 10.0;
constexpr double kCriterion2Seconds = 30.0;
constexpr double kCriterion3Seconds = 30.0;
constexpr double kTrainCpuSeconds = 15.0 * 60.0;
constexpr double kPairAppearanceMax = 0.60;
constexpr double kChance = 1.0 / 8.0;
constexpr double kFusionGain = 0.05;
constexpr double kRankFraction = 0.90;
constexpr int kRankPairs = 60;
constexpr double kHighSpeed = 4.0, kLowSpeed = 0.5;

struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double child_cpu_seconds() {
  rusage u{};
  getrusage(RUSAGE_CHILDREN, &u);
  return static_cast<double>(u.ru_utime.tv_sec + u.ru_stime.tv_sec) +
         1e-6 * static_cast<double>(u.ru_utime.tv_usec + u.ru_stime.tv_usec);
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("missing " + p.string());
  return json::parse(in);
}

// --- random inputs -----------------------------------------------------------

FlowField random_field(Rng& rng, int w, int h, double max_speed = 4.0) {
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    if (rng.uniform() < 0.2) continue;  // static pixel
    const double a = rng.uniform(0.0, 2.0 * M_PI);
    const double m = rng.uniform() < 0.05 ? rng.uniform(0.0, 2e-3) : rng.uniform(0.0, max_speed);
    f.u[i] = static_cast<float>(m * std::cos(a));
    f.v[i] = static_cast<float>(m * std::sin(a));
  }
  return f;
}

Mask random_mask(Rng& rng, int w, int h) {
  Mask m(w, h);
  const double p = rng.uniform(0.1, 0.9);
  for (auto& b : m.bits) b = rng.uniform() < p ? 1 : 0;
  m.bits[rng.below(m.bits.size())] = 1;
  return m;
}

// --- criterion 1 -------------------------------------------------------------

Check criterion1() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  const float eps = MotionThresholds{}.motion_epsilon;
  double worst_rt = 0.0, worst_circle = 0.0, worst_flip = 0.0;
  bool static_ok = true;
  for (int k = 0; k < 1000; ++k) {
    const int w = 1 + static_cast<int>(rng.below(64)), h = 1 + static_cast<int>(rng.below(64));
    const FlowField f = random_field(rng, w, h);
    const EncodedFlow e = encode_flow(f);
    const FlowField back = decode_flow(e);
    const EncodedFlow ef = encode_flow(flip_horizontal(f));
    const EncodedFlow fe = flip_horizontal(e);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = f.index(y, x);
        const double m = std::hypot(static_cast<double>(f.u[i]), static_cast<double>(f.v[i]));
        if (m <= eps) {
          static_ok = static_ok && e.f1[i] == 0.0f && e.f2[i] == 0.0f;
          continue;
        }
        worst_rt = std::max({worst_rt, std::abs(static_cast<double>(back.u[i]) - f.u[i]),
                             std::abs(static_cast<double>(back.v[i]) - f.v[i])});
        worst_circle = std::max(worst_circle, std::abs(std::hypot(static_cast<double>(e.f1[i]), e.f2[i]) - 1.0));
        const std::size_t j = f.index(y, w - 1 - x);  // mirrored position
        worst_flip = std::max({worst_flip, std::abs(static_cast<double>(ef.f1[j]) - fe.f1[j]),
                               std::abs(static_cast<double>(ef.f2[j]) - fe.f2[j]),
                               std::abs(static_cast<double>(ef.f3[j]) - fe.f3[j])});
      }
  }
  const double secs = seconds_since(t0);
  c.expect(worst_rt < kEncodeTol, fmt("round-trip error %.3g", worst_rt));
  c.expect(worst_circle < kEncodeTol, fmt("unit-circle deviation %.3g", worst_circle));
  c.expect(worst_flip < kEncodeTol, fmt("flip equivariance error %.3g", worst_flip));
  c.expect(static_ok, "static pixels must encode with f1 = f2 = 0");
  c.expect(secs < kCriterion1Seconds, fmt("runtime %.2f s", secs));
  c.note(fmt("max round-trip %.2e, unit-circle %.2e, flip %.2e, %.2f s", worst_rt, worst_circle, worst_flip, secs));
  return c;
}

// --- criterion 2 -------------------------------------------------------------

D random_target(Rng& rng, int n, int h, int w) {
  D t(n, 3, h, w);
  for (int b = 0; b < n; ++b)
    for (std::size_t i = 0; i < t.plane_size(); ++i) {
      if (i % 3 == 1) continue;  // static
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      t.plane(b, 0)[i] = std::sin(a);
      t.plane(b, 1)[i] = std::cos(a);
      t.plane(b, 2)[i] = rng.uniform(0.1, 3.0);
    }
  return t;
}

Check criterion2() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  ClassifierConfig cc;
  cc.base_channels = 4;
  cc.seed = 7;
  ConvClassifier<double> phi = ConvClassifier<float>(cc).cast<double>();
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](const std::string& name, const GradcheckResult& r) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
    c.expect(r.max_rel_error < kGradTol, fmt("%s rel error %.3g", name.c_str(), r.max_rel_error));
  };
  bool zero_ok = true;
  for (int trial = 0; trial < 3; ++trial) {
    const D t = random_target(rng, 2, 4, 4);
    D x = t;
    for (auto& v : x.values()) v += 0.3 * rng.normal();
    for (auto mode : {PixelWeighting::Uniform, PixelWeighting::MagnitudeWeighted})
      record(std::string("pixel_loss/") + std::string(weighting_name(mode)),
             gradcheck([&](const D& p, D* g) { return pixel_loss(p, t, mode, g); }, x));
    for (int layer = 1; layer <= 2; ++layer)
      record(fmt("content_loss/layer%d", layer),
             gradcheck([&](const D& p, D* g) { return content_loss(phi, p, t, layer, g); }, x));
    for (auto mode : {PixelWeighting::Uniform, PixelWeighting::MagnitudeWeighted}) {
      const LossConfig lc{0.02, 2, mode};
      record(std::string("total_loss/") + std::string(weighting_name(mode)),
             gradcheck([&](const D& p, D* g) { return total_loss(p, t, &phi, lc, g).total; }, x));
    }
    for (double lambda : {0.0, 0.02}) {
      LossConfig lc;
      lc.lambda = lambda;
      D g;
      total_loss(x, t, &phi, lc, &g);
      for (int n = 0; n < t.n(); ++n)
        for (std::size_t i = 0; i < t.plane_size(); ++i)
          if (t.plane(n, 2)[i] == 0.0) zero_ok = zero_ok && g.plane(n, 0)[i] == 0.0 && g.plane(n, 1)[i] == 0.0;
    }
  }
  const double secs = seconds_since(t0);
  c.expect(zero_ok, "direction gradient nonzero at a static target pixel");
  c.expect(secs < kCriterion2Seconds, fmt("runtime %.2f s", secs));
  c.note(fmt("worst rel error %.2e (%s), %.2f s", worst, worst_name.c_str(), secs));
  return c;
}

// --- criterion 3 -------------------------------------------------------------

struct Oracle {
  double epe = 0, ds = 0, os = 0;
  std::size_t moving = 0;
};

Oracle brute_force(const FlowField& p, const FlowField& g, const Mask& m, double eps) {
  Oracle o;
  std::size_t n = 0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      if (!m.at(y, x)) continue;
      const std::size_t i = g.index(y, x);
      const double pu = p.u[i], pv = p.v[i], gu = g.u[i], gv = g.v[i];
      o.epe += std::sqrt((pu - gu) * (pu - gu) + (pv - gv) * (pv - gv));
      ++n;
      const double gm = std::sqrt(gu * gu + gv * gv), pm = std::sqrt(pu * pu + pv * pv);
      if (gm <= eps) continue;
      ++o.moving;
      const double cosine = pm <= eps ? 0.0 : (pu * gu + pv * gv) / (pm * gm);
      o.ds += cosine;
      o.os += std::abs(cosine);
    }
  o.epe /= static_cast<double>(n);
  if (o.moving) {
    o.ds /= static_cast<double>(o.moving);
    o.os /= static_cast<double>(o.moving);
  }
  return o;
}

Check criterion3() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(303);
  double worst = 0.0;
  bool os_ge_ds = true, identity_ok = true;
  for (int k = 0; k < 100; ++k) {
    const int w = 2 + static_cast<int>(rng.below(40)), h = 2 + static_cast<int>(rng.below(40));
    const FlowField g = random_field(rng, w, h);
    const FlowField p = random_field(rng, w, h);
    const Mask m = random_mask(rng, w, h);
    const Oracle o = brute_force(p, g, m, kDefaultEvalEpsilon);
    const PixelMetrics pm = compute_metrics(p, g, m);
    worst = std::max(worst, std::abs(pm.epe - o.epe));
    worst = std::max(worst, std::abs(epe(p, g, m) - o.epe));
    c.expect(pm.moving_pixels == o.moving, "moving-pixel count differs from oracle");
    if (o.moving) {
      worst = std::max({worst, std::abs(pm.ds - o.ds), std::abs(pm.os - o.os),
                        std::abs(direction_similarity(p, g, m) - o.ds),
                        std::abs(orientation_similarity(p, g, m) - o.os)});
      os_ge_ds = os_ge_ds && pm.os >= pm.ds;
    }
    const PixelMetrics id = compute_metrics(g, g, m);
    identity_ok = identity_ok && id.epe == 0.0 && (id.moving_pixels == 0 || (std::abs(id.ds - 1.0) < kMetricTol &&
                                                                              std::abs(id.os - 1.0) < kMetricTol));
  }
  const double secs = seconds_since(t0);
  c.expect(worst < kMetricTol, fmt("oracle mismatch %.3g", worst));
  c.expect(os_ge_ds, "OS < DS on some instance");
  c.expect(identity_ok, "identity predictor does not score (0, 1, 1)");
  c.expect(secs < kCriterion3Seconds, fmt("runtime %.2f s", secs));
  c.note(fmt("max oracle deviation %.2e, %.2f s", worst, secs));
  return c;
}

// --- criterion 4 -------------------------------------------------------------

std::string input_error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  } catch (const std::exception& e) {
    return std::string("wrong exception type: ") + e.what();
  }
  return "no error";
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

Check criterion4(const fs::path& work) {
  Check c;
  const fs::path dir = work / "formats";
  fs::create_directories(dir);
  Rng rng(404);
  bool flo_exact = true;
  double bound_q[3] = {0, 0, 0};
  for (int k = 0; k < 100; ++k) {
    const int w = 1 + static_cast<int>(rng.below(48)), h = 1 + static_cast<int>(rng.below(48));
    FlowField f(w, h);
    for (std::size_t i = 0; i < f.pixel_count(); ++i) {
      f.u[i] = static_cast<float>(rng.normal() * 3.0);
      f.v[i] = static_cast<float>(rng.normal() * 3.0);
    }
    const fs::path p = dir / fmt("f%03d.flo", k);
    write_flo(f, p);
    const FlowField back = read_flo(p);
    flo_exact = flo_exact && back.width == w && back.height == h &&
                std::memcmp(back.u.data(), f.u.data(), f.pixel_count() * sizeof(float)) == 0 &&
                std::memcmp(back.v.data(), f.v.data(), f.pixel_count() * sizeof(float)) == 0 &&
                file_bytes(p) == encode_flo_bytes(back);

    const EncodedFlow e = encode_flow(f);
    float m_max = 0.0f;
    for (float m : e.f3) m_max = std::max(m_max, m);
    m_max = std::max(m_max, 1e-3f);
    const fs::path qp = dir / fmt("q%03d.ppm", k);
    write_quantized(quantize(e, m_max), qp);
    const EncodedFlow d = dequantize(read_quantized(qp));
    const double half[3] = {1.0 / 255.0, 1.0 / 255.0, 0.5 * m_max / 255.0};
    double worst_q[3] = {0, 0, 0};
    for (std::size_t i = 0; i < e.pixel_count(); ++i) {
      worst_q[0] = std::max(worst_q[0], std::abs(static_cast<double>(d.f1[i]) - e.f1[i]));
      worst_q[1] = std::max(worst_q[1], std::abs(static_cast<double>(d.f2[i]) - e.f2[i]));
      worst_q[2] = std::max(worst_q[2], std::abs(static_cast<double>(d.f3[i]) - e.f3[i]));
    }
    for (int ch = 0; ch < 3; ++ch) bound_q[ch] = std::max(bound_q[ch], worst_q[ch] / half[ch]);
  }
  c.expect(flo_exact, ".flo round trip not bit-exact");
  // a step is 2/255 for directions, m_max/255 for magnitude; float slack 1e-6 relative
  for (int ch = 0; ch < 3; ++ch) c.expect(bound_q[ch] <= 1.0 + 1e-5, fmt("channel %d quantization %.4f half-steps", ch, bound_q[ch]));

  const fs::path good = dir / "good.flo";
  write_flo(FlowField(3, 2), good);
  const auto bytes = file_bytes(good);
  const fs::path bad = dir / "bad.flo";
  auto diag = [&](std::vector<std::uint8_t> b) {
    put_bytes(bad, b);
    return input_error_of([&] { read_flo(bad); });
  };
  auto with = [&](std::size_t at, float value) {
    auto b = bytes;
    std::memcpy(b.data() + at, &value, 4);
    return b;
  };
  auto with_int = [&](std::size_t at, std::int32_t value) {
    auto b = bytes;
    std::memcpy(b.data() + at, &value, 4);
    return b;
  };
  const std::vector<std::pair<std::string, std::string>> cases{
      {diag(with(0, 0.0f)), "bad magic"},
      {diag(with_int(4, 0)), "non-positive dimensions"},
      {diag(with_int(8, -3)), "non-positive dimensions"},
      {diag({bytes.begin(), bytes.begin() + 7}), "truncated .flo header"},
      {diag({bytes.begin(), bytes.end() - 4}), "truncated .flo payload"},
  };
  for (const auto& [got, want] : cases) c.expect(got.find(want) != std::string::npos, "expected '" + want + "', got '" + got + "'");
  c.note(fmt("quantization within %.3f / %.3f / %.3f half-steps; %zu header cases", bound_q[0], bound_q[1], bound_q[2],
             cases.size()));
  return c;
}

// --- CLI driven criteria -----------------------------------------------------

struct Cli {
  std::string exe;
  fs::path log;

  // Runs a subcommand, appending stdout/stderr to the log. Returns exit code.
  int operator()(const std::string& args) const {
    const std::string cmd = "\"" + exe + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
    {
      std::ofstream(log, std::ios::app) << "\n$ im2flow_cli " << args << "\n";
    }
    std::fflush(stdout);
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : 128;
  }
};

struct PipelineResult {
  bool ok = false;
  std::string error;
  double train_cpu = 0.0;
  json metrics;      // predictor -> mask -> {epe, ds, os}
  json recognition;  // recognition_report.json
  json fusion;
};

// synth -> train-content -> train-im2flow -> evaluate -> train-streams -> recognize
PipelineResult run_pipeline(const Cli& cli, const fs::path& root, bool streams) {
  PipelineResult r;
  const std::string q = "\"", d = q + (root / "data").string() + q;
  auto step = [&](const std::string& args) {
    if (!r.error.empty()) return;
    const int rc = cli(args);
    if (rc != 0) r.error = fmt("exit %d from: ", rc) + args.substr(0, args.find(' '));
  };
  step("synth --out " + d);
  step("train-content --data " + d + " --out " + q + (root / "content").string() + q);
  const double cpu0 = child_cpu_seconds();
  step("train-im2flow --data " + d + " --content " + q + (root / "content" / "content.ckpt").string() + q + " --out " + q +
       (root / "im2flow").string() + q);
  r.train_cpu = child_cpu_seconds() - cpu0;
  const std::string model = q + (root / "im2flow" / "im2flow.ckpt").string() + q;
  step("evaluate --data " + d + " --model " + model + " --predictor im2flow zero nn --out " + q + (root / "eval").string() + q);
  if (streams) {
    step("train-streams --data " + d + " --model " + model + " --out " + q + (root / "streams").string() + q);
    step("recognize --streams " + q + (root / "streams").string() + q + " --model " + model + " --data " + d + " --out " +
         q + (root / "recog").string() + q);
  }
  if (!r.error.empty()) return r;
  try {
    r.metrics = read_json_file(root / "eval" / "metrics_summary.json");
    if (streams) {
      r.recognition = read_json_file(root / "recog" / "recognition_report.json");
      r.fusion = read_json_file(root / "streams" / "fusion.json");
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

PipelineResult train_only(const Cli& cli, const fs::path& data, const fs::path& content, const fs::path& root,
                          const std::string& extra) {
  PipelineResult r;
  const std::string q = "\"";
  const double cpu0 = child_cpu_seconds();
  int rc = cli("train-im2flow --data " + q + data.string() + q + " --content " + q + content.string() + q + " " + extra +
               " --out " + q + (root / "im2flow").string() + q);
  r.train_cpu = child_cpu_seconds() - cpu0;
  if (rc == 0)
    rc = cli("evaluate --data " + q + data.string() + q + " --model " + q + (root / "im2flow" / "im2flow.ckpt").string() +
             q + " --predictor im2flow zero nn --out " + q + (root / "eval").string() + q);
  if (rc != 0) {
    r.error = fmt("CLI exit %d", rc);
    return r;
  }
  r.metrics = read_json_file(root / "eval" / "metrics_summary.json");
  r.ok = true;
  return r;
}

// Ordering checks of the flow-prediction claim on every mask.
void flow_claim(Check& c, const PipelineResult& r) {
  if (!r.ok) {
    c.expect(false, "pipeline failed: " + r.error);
    return;
  }
  for (const char* mask : {"all", "canny", "fg"}) {
    const auto& im = r.metrics["im2flow"][mask];
    const auto& zero = r.metrics["zero"][mask];
    const auto& nnb = r.metrics["nn"][mask];
    const double e = im["epe"], ez = zero["epe"], en = nnb["epe"];
    const double ds = im["ds"], dsn = nnb["ds"], os = im["os"], osn = nnb["os"];
    c.expect(e < ez, fmt("%s: EPE %.4f not below zero-flow %.4f", mask, e, ez));
    c.expect(e < en, fmt("%s: EPE %.4f not below NN %.4f", mask, e, en));
    c.expect(ds > dsn, fmt("%s: DS %.4f not above NN %.4f", mask, ds, dsn));
    c.expect(os > osn, fmt("%s: OS %.4f not above NN %.4f", mask, os, osn));
    c.note(fmt("%-5s EPE %.4f (zero %.4f, nn %.4f)  DS %.3f (nn %.3f)  OS %.3f (nn %.3f)", mask, e, ez, en, ds, dsn, os,
               osn));
  }
  c.expect(r.train_cpu <= kTrainCpuSeconds, fmt("training used %.0f CPU-s", r.train_cpu));
  c.note(fmt("train-im2flow CPU time %.0f s (budget %.0f s)", r.train_cpu, kTrainCpuSeconds));
}

double json_number(const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

double mean_pairs(const json& block) {
  double s = 0;
  int n = 0;
  for (const auto& v : block["pair_accuracy"])
    if (v.is_number()) {
      s += v.get<double>();
      ++n;
    }
  return n ? s / n : std::nan("");
}

Check criterion6(const PipelineResult& r) {
  Check c;
  if (!r.ok) {
    c.expect(false, "pipeline failed: " + r.error);
    return c;
  }
  const json& rep = r.recognition;
  const auto& pairs = rep["appearance"]["pair_accuracy"];
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double a = json_number(pairs[k]);
    c.expect(a <= kPairAppearanceMax, fmt("appearance accuracy %.3f on pair %zu", a, k));
  }
  const double app = rep["appearance"]["accuracy"], mot = rep["motion"]["accuracy"], fused = rep["fused"]["accuracy"];
  const double gt = rep["motion_gt"]["accuracy"];
  const double app_pairs = mean_pairs(rep["appearance"]), mot_pairs = mean_pairs(rep["motion"]);
  c.expect(mot > kChance, fmt("motion accuracy %.3f not above chance", mot));
  c.expect(mot_pairs > app_pairs, fmt("motion pair accuracy %.3f not above appearance %.3f", mot_pairs, app_pairs));
  c.expect(fused >= app + kFusionGain - 1e-12, fmt("fused %.3f < appearance %.3f + %.2f", fused, app, kFusionGain));
  c.expect(gt >= mot, fmt("ground-truth motion %.3f < hallucinated %.3f", gt, mot));
  std::string pa;
  for (const auto& v : pairs) pa += fmt(" %.3f", json_number(v));
  c.note("appearance per-pair accuracy:" + pa);
  c.note(fmt("accuracy appearance %.3f, motion %.3f, fused %.3f (w=%.2f), motion on true flow %.3f", app, mot, fused,
             json_number(r.fusion["fusion"]["weight"]), gt));
  c.note(fmt("mean pair accuracy appearance %.3f, motion %.3f", app_pairs, mot_pairs));
  return c;
}

// Controlled pairs: one translating scene rendered at high and low speed, plus
// a blank-background control per pair. A stationary copy of the object is
// ranked too but only reported.
Check criterion8(const Cli& cli, const fs::path& work, const fs::path& model) {
  Check c;
  const fs::path root = work / "potential";
  Dataset ds;
  ds.config.seed = 808;
  int made = 0;
  for (int i = 0; made < kRankPairs; ++i) {
    const SceneSpec s = sample_scene(ds.config, Split::Test, i);
    if (static_cast<int>(s.motion.action) > static_cast<int>(ActionClass::Fall)) continue;
    const std::pair<const char*, double> variants[] = {{"high", kHighSpeed}, {"low", kLowSpeed}, {"still", 0.0}};
    std::vector<SyntheticSample> group;
    try {
      for (const auto& [tag, speed] : variants) {
        SceneSpec t = s;
        t.motion.magnitude = speed;
        group.push_back(make_sample(t, Split::Test, fmt("p%03d-%s", made, tag)));
      }
    } catch (const ConfigError&) {
      continue;
    }
    SyntheticSample blank = group.back();
    blank.id = fmt("p%03d-blank", made);
    blank.frame = render_background(s);
    blank.target = FlowField(s.image_size, s.image_size);
    blank.mask = Mask(s.image_size, s.image_size);
    group.push_back(blank);
    for (auto& smp : group) ds.test.push_back(std::move(smp));
    ++made;
  }
  write_dataset(ds, root / "data");
  const std::string q = "\"";
  const int rc = cli("rank-motion --model " + q + model.string() + q + " --data " + q + (root / "data").string() + q +
                     " --out " + q + (root / "rank").string() + q);
  if (rc != 0) {
    c.expect(false, fmt("rank-motion exit %d", rc));
    return c;
  }
  std::map<std::string, int> rank;
  std::ifstream in(root / "rank" / "ranking.jsonl");
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) {
      const json j = json::parse(line);
      rank[j["id"].get<std::string>()] = j["rank"].get<int>();
    }
  c.expect(static_cast<int>(rank.size()) == 4 * made, "ranking is missing images");
  int wins = 0, still_below_low = 0, worst_object = 0, best_blank = 1 << 30;
  for (int p = 0; p < made; ++p) {
    const int hi = rank[fmt("p%03d-high", p)], lo = rank[fmt("p%03d-low", p)];
    const int st = rank[fmt("p%03d-still", p)], bl = rank[fmt("p%03d-blank", p)];
    wins += hi < lo;
    still_below_low += lo < st;
    worst_object = std::max({worst_object, hi, lo, st});
    best_blank = std::min(best_blank, bl);
  }
  const double frac = static_cast<double>(wins) / made;
  c.expect(frac >= kRankFraction, fmt("high ranked above low in %.3f of pairs", frac));
  c.expect(best_blank > worst_object, fmt("a blank control ranks %d, above object rank %d", best_blank, worst_object));
  c.note(fmt("%d pairs: high above low in %d (%.3f); best blank rank %d, worst object rank %d", made, wins, frac,
             best_blank, worst_object));
  c.note(fmt("stationary object below its low-speed twin in %d of %d (not gated)", still_below_low, made));
  return c;
}

std::map<std::string, std::string> checksum_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    // the resolved-options record holds the output path, which differs by design
    if (e.path().filename().string().ends_with(".config.ini")) continue;
    const auto b = file_bytes(e.path());
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (auto x : b) h = (h ^ x) * 1099511628211ULL;
    out[fs::relative(e.path(), dir).string()] = fmt("%016llx:%zu", static_cast<unsigned long long>(h), b.size());
  }
  return out;
}

// Every number in `a` must appear in `b` within tolerance.
void compare_numbers(const json& a, const json& b, const std::string& path, double& worst, std::vector<std::string>& diffs) {
  if (a.is_number()) {
    if (!b.is_number()) {
      diffs.push_back(path + " missing");
      return;
    }
    const double d = std::abs(a.get<double>() - b.get<double>());
    worst = std::max(worst, d);
    if (!(d <= kRepeatTol)) diffs.push_back(fmt("%s differs by %.3g", path.c_str(), d));
  } else if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) {
        diffs.push_back(path + "/" + it.key() + " missing");
        continue;
      }
      compare_numbers(it.value(), b[it.key()], path + "/" + it.key(), worst, diffs);
    }
  } else if (a.is_array()) {
    if (!b.is_array() || a.size() != b.size()) {
      diffs.push_back(path + " length differs");
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) compare_numbers(a[i], b[i], path + fmt("[%zu]", i), worst, diffs);
  } else if (a.is_null() != b.is_null()) {
    diffs.push_back(path + " null mismatch");
  }
}

Check criterion9(const PipelineResult& a, const PipelineResult& b, const fs::path& ra, const fs::path& rb) {
  Check c;
  if (!a.ok || !b.ok) {
    c.expect(false, "pipeline failed: " + (a.ok ? b.error : a.error));
    return c;
  }
  const auto ca = checksum_tree(ra / "data"), cb = checksum_tree(rb / "data");
  std::size_t mismatched = 0;
  for (const auto& [k, v] : ca) {
    auto it = cb.find(k);
    if (it == cb.end() || it->second != v) ++mismatched;
  }
  c.expect(ca.size() == cb.size() && mismatched == 0,
           fmt("%zu of %zu dataset files differ (%zu vs %zu files)", mismatched, ca.size(), ca.size(), cb.size()));
  double worst = 0.0;
  std::vector<std::string> diffs;
  compare_numbers(a.metrics, b.metrics, "metrics", worst, diffs);
  compare_numbers(a.recognition, b.recognition, "recognition", worst, diffs);
  compare_numbers(a.fusion["fusion"], b.fusion["fusion"], "fusion", worst, diffs);
  for (const auto& d : diffs) c.expect(false, d);
  c.note(fmt("%zu dataset files identical; max metric difference %.3g", ca.size() - mismatched, worst));
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"im2flow acceptance suite"};
  std::string cli_path, work_dir;
  std::vector<int> only;
  app.add_option("--cli", cli_path, "Path to im2flow_cli")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work_dir, "Scratch directory (recreated)")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);
  const Cli cli{fs::absolute(cli_path).string(), work / "cli.log"};
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  std::map<int, std::pair<std::string, Check>> results;
  auto run = [&](int k, const std::string& name, const std::function<Check()>& f) {
    if (!wanted(k)) return;
    std::printf("criterion %d (%s) running...\n", k, name.c_str());
    std::fflush(stdout);
    Check c;
    try {
      c = f();
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    for (const auto& n : c.notes) std::printf("    %s\n", n.c_str());
    for (const auto& f : c.failures) std::printf("    failed: %s\n", f.c_str());
    std::printf("%s criterion %d: %s\n", c.failures.empty() ? "PASS" : "FAIL", k, name.c_str());
    std::fflush(stdout);
    results[k] = {name, c};
  };

  run(1, "encoding round trip and invariants", criterion1);
  run(2, "loss gradients", criterion2);
  run(3, "metric oracle equivalence", criterion3);
  run(4, "file format round trips and diagnostics", [&] { return criterion4(work); });

  PipelineResult main_run, repeat_run;
  const bool need_pipeline = wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(9);
  if (need_pipeline) {
    std::printf("running pipeline in %s (log: %s)\n", (work / "run1").string().c_str(), cli.log.string().c_str());
    std::fflush(stdout);
    main_run = run_pipeline(cli, work / "run1", wanted(6) || wanted(9));
  }
  run(5, "flow prediction beats zero-flow and nearest-neighbour", [&] {
    Check c;
    flow_claim(c, main_run);
    return c;
  });
  run(6, "two-stream recognition", [&] { return criterion6(main_run); });
  run(7, "content-loss ablation (lambda 0.02 and 0)", [&] {
    Check c;
    flow_claim(c, main_run);
    if (!main_run.ok) return c;
    const PipelineResult r0 = train_only(cli, work / "run1" / "data", work / "run1" / "content" / "content.ckpt",
                                         work / "lambda0", "--lambda 0");
    Check c0;
    flow_claim(c0, r0);
    for (auto& n : c.notes) n = "lambda 0.02: " + n;
    for (auto& f : c.failures) f = "lambda 0.02: " + f;
    for (const auto& n : c0.notes) c.note("lambda 0: " + n);
    for (const auto& f : c0.failures) c.failures.push_back("lambda 0: " + f);
    return c;
  });
  run(8, "motion-potential ranking", [&] {
    if (!main_run.ok) {
      Check c;
      c.expect(false, "pipeline failed: " + main_run.error);
      return c;
    }
    return criterion8(cli, work, work / "run1" / "im2flow" / "im2flow.ckpt");
  });
  run(9, "determinism of the full pipeline", [&] {
    repeat_run = run_pipeline(cli, work / "run2", true);
    return criterion9(main_run, repeat_run, work / "run1", work / "run2");
  });

  std::printf("\nsummary\n");
  bool all = true;
  for (const auto& [k, v] : results) {
    std::printf("%s criterion %d: %s\n", v.second.failures.empty() ? "PASS" : "FAIL", k, v.first.c_str());
    all = all && v.second.failures.empty();
  }
  return all ? 0 : 1;
}
