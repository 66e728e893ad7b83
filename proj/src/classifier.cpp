#include "im2flow/classifier.hpp"

#include <algorithm>

#include "im2flow/checkpoint.hpp"

namespace im2flow {

void ClassifierConfig::validate() const {
  if (in_channels < 1) throw ConfigError("classifier: in_channels must be >= 1");
  if (base_channels < 1) throw ConfigError("classifier: base_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("classifier: num_classes must be >= 2");
}

std::vector<std::vector<double>> softmax_rows(const nn::Tensor<float>& logits) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(logits.n()));
  const int k = logits.c();
  for (int n = 0; n < logits.n(); ++n) {
    auto row = logits.sample(n);
    const double mx = *std::max_element(row.begin(), row.end());
    auto& p = out[static_cast<std::size_t>(n)];
    p.resize(static_cast<std::size_t>(k));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += (p[j] = std::exp(row[j] - mx));
    for (auto& v : p) v /= z;
  }
  return out;
}

void save_classifier(Classifier& net, const std::filesystem::path& path, const nlohmann::json& extra) {
  const auto& c = net.config();
  CheckpointData data;
  data.kind = CheckpointKind::Classifier;
  data.header = {{"config",
                  {{"in_channels", c.in_channels},
                   {"base_channels", c.base_channels},
                   {"num_classes", c.num_classes},
                   {"seed", c.seed}}},
                 {"input_mean", net.input_mean()},
                 {"input_std", net.input_std()},
                 {"extra", extra}};
  data.tensors = collect_tensors(net.parameters(), net.buffers());
  write_checkpoint(data, path);
}

Classifier load_classifier(const std::filesystem::path& path, nlohmann::json* extra) {
  const auto data = read_checkpoint(path, CheckpointKind::Classifier);
  ClassifierConfig c;
  try {
    const auto& j = data.header.at("config");
    c.in_channels = j.at("in_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt checkpoint (bad classifier header) " + path.string() + ": " + e.what());
  }
  Classifier net(c);
  net.set_input_stats(data.header.at("input_mean").get<std::vector<double>>(),
                      data.header.at("input_std").get<std::vector<double>>());
  restore_tensors(data.tensors, net.parameters(), net.buffers());
  if (extra) *extra = data.header.value("extra", nlohmann::json::object());
  return net;
}

}  // namespace im2flow
