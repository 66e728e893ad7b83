#include "im2flow/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "im2flow/checkpoint.hpp"
#include "im2flow/error.hpp"

namespace im2flow {

void ModelConfig::validate() const {
  if (depth < 2) throw ConfigError("model config: depth must be >= 2, got " + std::to_string(depth));
  if (input_size < 1 || input_size % (1 << depth) != 0)
    throw ConfigError("model config: input_size (" + std::to_string(input_size) + ") must be divisible by 2^depth (" +
                      std::to_string(1 << depth) + ")");
  if (in_channels < 1) throw ConfigError("model config: in_channels must be >= 1");
  if (base_channels < 1) throw ConfigError("model config: base_channels must be >= 1");
  if (dilation_rates.empty()) throw ConfigError("model config: dilation_rates must be non-empty");
  for (int r : dilation_rates)
    if (r < 1) throw ConfigError("model config: dilation_rates entries must be >= 1");
}

int ModelConfig::channels_at(int stage) const { return std::min(base_channels << stage, 8 * base_channels); }

int bottleneck_receptive_field(const ModelConfig& config) {
  config.validate();
  int rf = 3;  // stem
  int jump = 1;
  for (int i = 0; i < config.depth; ++i) {
    rf += 2 * jump;
    jump *= 2;
  }
  for (int r : config.dilation_rates) rf += 2 * r * jump;
  return rf;
}

Im2FlowModel::Im2FlowModel(const ModelConfig& config, float m_max) : config_(config) {
  config.validate();
  set_m_max(m_max);
  mean_.assign(config.in_channels, 0.0);
  std_.assign(config.in_channels, 1.0);

  stem_ = nn::ConvBnRelu<float>("stem", config.in_channels, config.channels_at(0), 1, 1);
  for (int i = 1; i <= config.depth; ++i)
    down_.emplace_back("down" + std::to_string(i), config.channels_at(i - 1), config.channels_at(i), 2, 1);
  const int deep = config.channels_at(config.depth);
  for (std::size_t i = 0; i < config.dilation_rates.size(); ++i)
    bottleneck_.emplace_back("bottleneck" + std::to_string(i + 1), deep, deep, 1, config.dilation_rates[i]);
  int in = deep;
  for (int stage = config.depth - 1; stage >= 0; --stage) {
    const int skip = config.channels_at(stage);
    UpBlock block;
    block.up = nn::ConvTranspose2x2<float>("up" + std::to_string(stage) + ".upsample", in, skip);
    block.fuse = nn::ConvBnRelu<float>("up" + std::to_string(stage) + ".fuse", 2 * skip, skip, 1, 1);
    block.skip_channels = skip;
    up_.push_back(std::move(block));
    in = skip;
  }
  head_ = nn::Conv2d<float>("head", config.channels_at(0), 3, 1, 1, 0, 1, true);

  Rng rng(Rng::derive(config.seed, 0x1f10));
  stem_.init(rng);
  for (auto& b : down_) b.init(rng);
  for (auto& b : bottleneck_) b.init(rng);
  for (auto& b : up_) {
    b.up.init(rng);
    b.fuse.init(rng);
  }
  head_.init(rng);
}

void Im2FlowModel::set_m_max(float m_max) {
  if (!(m_max > 0.0f) || !std::isfinite(m_max)) throw ConfigError("model: m_max must be finite and > 0");
  m_max_ = m_max;
}

void Im2FlowModel::set_input_stats(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != static_cast<std::size_t>(config_.in_channels) || stddev.size() != mean.size())
    throw ConfigError("model: input statistics size mismatch");
  for (double s : stddev)
    if (!(s > 0.0)) throw ConfigError("model: input std must be > 0");
  mean_ = std::move(mean);
  std_ = std::move(stddev);
}

void Im2FlowModel::set_magnitude_prior(double magnitude) {
  const double p = std::clamp(magnitude / m_max_, 1e-4, 0.5);
  head_.bias.value[2] = static_cast<float>(std::log(p / (1.0 - p)));
}

void Im2FlowModel::check_input(const Tensor& images) const {
  if (images.c() != config_.in_channels || images.h() != config_.input_size || images.w() != config_.input_size)
    throw ConfigError("model: expected input (N," + std::to_string(config_.in_channels) + "," +
                      std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) + "), got " +
                      images.shape_string());
}

Tensor Im2FlowModel::normalize(const Tensor& images) const {
  check_input(images);
  Tensor x = images;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (auto& v : x.plane(n, c)) v = static_cast<float>((v - mean_[c]) / std_[c]);
  return x;
}

namespace {

Tensor activate_head(const Tensor& z, float m_max) {
  Tensor y(z.n(), 3, z.h(), z.w());
  for (int n = 0; n < z.n(); ++n) {
    for (int c = 0; c < 2; ++c) {
      auto src = z.plane(n, c);
      auto dst = y.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::tanh(src[i]);
    }
    auto src = z.plane(n, 2);
    auto dst = y.plane(n, 2);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = m_max / (1.0f + std::exp(-src[i]));
  }
  return y;
}

}  // namespace

Tensor Im2FlowModel::forward(const Tensor& images, nn::Mode mode) {
  Tensor h = stem_.forward(normalize(images), mode);
  std::vector<Tensor> skips{h};
  for (std::size_t i = 0; i < down_.size(); ++i) {
    h = down_[i].forward(h, mode);
    if (i + 1 < down_.size()) skips.push_back(h);
  }
  for (auto& b : bottleneck_) h = b.forward(h, mode);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const Tensor& skip = skips[skips.size() - 1 - i];
    h = up_[i].fuse.forward(nn::concat_channels(up_[i].up.forward(h), skip), mode);
  }
  head_out_ = activate_head(head_.forward(h), m_max_);
  return head_out_;
}

void Im2FlowModel::backward(const Tensor& doutput) {
  if (!doutput.same_shape(head_out_)) throw ConfigError("model backward: gradient shape mismatch");
  Tensor dz(doutput.n(), 3, doutput.h(), doutput.w());
  for (int n = 0; n < dz.n(); ++n) {
    for (int c = 0; c < 2; ++c) {
      auto g = doutput.plane(n, c);
      auto y = head_out_.plane(n, c);
      auto d = dz.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0f - y[i] * y[i]);
    }
    auto g = doutput.plane(n, 2);
    auto y = head_out_.plane(n, 2);
    auto d = dz.plane(n, 2);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float s = y[i] / m_max_;
      d[i] = g[i] * m_max_ * s * (1.0f - s);
    }
  }
  Tensor dh = head_.backward(dz);
  // Skip gradients in encoder order (stage 0 .. depth-1).
  std::vector<Tensor> dskips(up_.size());
  for (std::size_t i = up_.size(); i-- > 0;) {
    Tensor dcat = up_[i].fuse.backward(dh);
    Tensor dup, dskip;
    nn::split_channels(dcat, up_[i].skip_channels, dup, dskip);
    dskips[up_.size() - 1 - i] = std::move(dskip);
    dh = up_[i].up.backward(dup);
  }
  for (auto it = bottleneck_.rbegin(); it != bottleneck_.rend(); ++it) dh = it->backward(dh);
  for (int i = static_cast<int>(down_.size()) - 1; i >= 0; --i) {
    dh = down_[i].backward(dh);
    // Output of down_[i-1] (or the stem for i == 0) also fed skip i.
    auto& ds = dskips[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < dh.size(); ++k) dh[k] += ds[k];
  }
  stem_.backward(dh);
}

Tensor Im2FlowModel::infer(const Tensor& images, std::span<const bool> skip_enabled) const {
  Tensor h = stem_.infer(normalize(images));
  std::vector<Tensor> skips{h};
  for (std::size_t i = 0; i < down_.size(); ++i) {
    h = down_[i].infer(h);
    if (i + 1 < down_.size()) skips.push_back(h);
  }
  for (const auto& b : bottleneck_) h = b.infer(h);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const std::size_t stage = skips.size() - 1 - i;
    Tensor skip = skips[stage];
    if (stage < skip_enabled.size() && !skip_enabled[stage]) skip.fill(0.0f);
    h = up_[i].fuse.infer(nn::concat_channels(up_[i].up.infer(h), skip));
  }
  return activate_head(head_.infer(h), m_max_);
}

Tensor Im2FlowModel::bottleneck_features(const Tensor& images) const {
  Tensor h = stem_.infer(normalize(images));
  for (const auto& d : down_) h = d.infer(h);
  for (const auto& b : bottleneck_) h = b.infer(h);
  Tensor flat(h.n(), static_cast<int>(h.sample_size()), 1, 1);
  flat.values() = h.values();
  return flat;
}

std::vector<nn::Parameter<float>*> Im2FlowModel::parameters() {
  std::vector<nn::Parameter<float>*> p;
  auto add = [&](auto&& list) {
    for (auto* q : list) p.push_back(q);
  };
  add(stem_.parameters());
  for (auto& b : down_) add(b.parameters());
  for (auto& b : bottleneck_) add(b.parameters());
  for (auto& b : up_) {
    add(b.up.parameters());
    add(b.fuse.parameters());
  }
  add(head_.parameters());
  return p;
}

std::vector<nn::Buffer<float>*> Im2FlowModel::buffers() {
  std::vector<nn::Buffer<float>*> out;
  auto add = [&](auto&& list) {
    for (auto* q : list) out.push_back(q);
  };
  add(stem_.buffers());
  for (auto& b : down_) add(b.buffers());
  for (auto& b : bottleneck_) add(b.buffers());
  for (auto& b : up_) add(b.fuse.buffers());
  return out;
}

std::size_t Im2FlowModel::parameter_count() {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Tensor image_to_tensor(const Image& image) {
  Tensor t(1, image.channels, image.height, image.width);
  t.values() = image.data;
  return t;
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ConfigError("images_to_tensor: empty batch");
  const auto& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.channels != first.channels || im.width != first.width || im.height != first.height)
      throw ConfigError("images_to_tensor: inconsistent image sizes in batch");
    std::copy(im.data.begin(), im.data.end(), t.sample(static_cast<int>(i)).begin());
  }
  return t;
}

std::vector<EncodedFlow> tensor_to_encoded(const Tensor& t) {
  if (t.c() != 3) throw ConfigError("tensor_to_encoded: expected 3 channels");
  std::vector<EncodedFlow> out;
  out.reserve(static_cast<std::size_t>(t.n()));
  for (int n = 0; n < t.n(); ++n) {
    EncodedFlow e(t.w(), t.h());
    auto p1 = t.plane(n, 0), p2 = t.plane(n, 1), p3 = t.plane(n, 2);
    e.f1.assign(p1.begin(), p1.end());
    e.f2.assign(p2.begin(), p2.end());
    e.f3.assign(p3.begin(), p3.end());
    out.push_back(std::move(e));
  }
  return out;
}

Tensor encoded_to_tensor(std::span<const EncodedFlow> flows) {
  if (flows.empty()) throw ConfigError("encoded_to_tensor: empty batch");
  const int w = flows.front().width, h = flows.front().height;
  Tensor t(static_cast<int>(flows.size()), 3, h, w);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto& e = flows[i];
    if (e.width != w || e.height != h) throw ConfigError("encoded_to_tensor: inconsistent sizes in batch");
    const int n = static_cast<int>(i);
    std::copy(e.f1.begin(), e.f1.end(), t.plane(n, 0).begin());
    std::copy(e.f2.begin(), e.f2.end(), t.plane(n, 1).begin());
    std::copy(e.f3.begin(), e.f3.end(), t.plane(n, 2).begin());
  }
  return t;
}

std::vector<EncodedFlow> predict_encoded(const Im2FlowModel& model, std::span<const Image> images, int batch_size) {
  std::vector<EncodedFlow> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto n = std::min(images.size() - i, static_cast<std::size_t>(batch_size));
    auto batch = tensor_to_encoded(model.infer(images_to_tensor(images.subspan(i, n))));
    for (auto& e : batch) out.push_back(std::move(e));
  }
  return out;
}

void save_checkpoint(Im2FlowModel& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  CheckpointData data;
  data.kind = CheckpointKind::Im2Flow;
  data.header = {{"config",
                  {{"input_size", c.input_size},
                   {"in_channels", c.in_channels},
                   {"base_channels", c.base_channels},
                   {"depth", c.depth},
                   {"dilation_rates", c.dilation_rates},
                   {"seed", c.seed}}},
                 {"m_max", model.m_max()},
                 {"input_mean", model.input_mean()},
                 {"input_std", model.input_std()}};
  data.tensors = collect_tensors(model.parameters(), model.buffers());
  write_checkpoint(data, path);
}

Im2FlowModel load_checkpoint(const std::filesystem::path& path) {
  const auto data = read_checkpoint(path, CheckpointKind::Im2Flow);
  ModelConfig c;
  float m_max = 1.0f;
  std::vector<double> mean, stddev;
  try {
    const auto& j = data.header.at("config");
    c.input_size = j.at("input_size").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.depth = j.at("depth").get<int>();
    c.dilation_rates = j.at("dilation_rates").get<std::vector<int>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    m_max = data.header.at("m_max").get<float>();
    mean = data.header.at("input_mean").get<std::vector<double>>();
    stddev = data.header.at("input_std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt checkpoint (bad model header) " + path.string() + ": " + e.what());
  }
  Im2FlowModel model(c, m_max);
  model.set_input_stats(std::move(mean), std::move(stddev));
  restore_tensors(data.tensors, model.parameters(), model.buffers());
  return model;
}

}  // namespace im2flow
