#include "im2flow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "im2flow/error.hpp"

namespace im2flow {

namespace {

constexpr char kMagic[4] = {'I', '2', 'F', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InputError("corrupt checkpoint (truncated): " + source_);
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(data.kind));
  const std::string header = data.header.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  put_u32(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    for (int d : {t.value.n(), t.value.c(), t.value.h(), t.value.w()}) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw InputError("write failed: " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path, CheckpointKind expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open checkpoint: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string src = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw InputError("corrupt checkpoint (bad magic): " + src);
  Reader r(bytes, src);
  r.str(4);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version mismatch: file has v" + std::to_string(version) + ", expected v" +
                       std::to_string(kCheckpointVersion) + ": " + src);
  CheckpointData data;
  data.kind = static_cast<CheckpointKind>(r.u32());
  if (data.kind != expected)
    throw InputError("checkpoint kind mismatch (got " + std::to_string(static_cast<unsigned>(data.kind)) +
                     ", expected " + std::to_string(static_cast<unsigned>(expected)) + "): " + src);
  const auto header_len = r.u32();
  try {
    data.header = nlohmann::json::parse(r.str(header_len));
  } catch (const nlohmann::json::exception&) {
    throw InputError("corrupt checkpoint (bad header): " + src);
  }
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.str(r.u32());
    int dims[4];
    for (int& d : dims) {
      d = static_cast<int>(r.u32());
      if (d < 0 || d > (1 << 24)) throw InputError("corrupt checkpoint (bad tensor shape): " + src);
    }
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
    r.need(n * 4);
    t.value = nn::Tensor<float>(dims[0], dims[1], dims[2], dims[3]);
    for (std::size_t i = 0; i < n; ++i) t.value[i] = std::bit_cast<float>(r.u32());
    data.tensors.push_back(std::move(t));
  }
  return data;
}

std::vector<NamedTensor> collect_tensors(const std::vector<nn::Parameter<float>*>& params,
                                         const std::vector<nn::Buffer<float>*>& buffers) {
  std::vector<NamedTensor> out;
  for (const auto* p : params) out.push_back({p->name, p->value});
  for (const auto* b : buffers) out.push_back({b->name, b->value});
  return out;
}

void restore_tensors(const std::vector<NamedTensor>& tensors, const std::vector<nn::Parameter<float>*>& params,
                     const std::vector<nn::Buffer<float>*>& buffers) {
  std::map<std::string, const nn::Tensor<float>*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto restore = [&](const std::string& name, nn::Tensor<float>& dst) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint is missing tensor '" + name + "'");
    if (!it->second->same_shape(dst))
      throw InputError("checkpoint shape mismatch for tensor '" + name + "': file " + it->second->shape_string() +
                       ", model " + dst.shape_string());
    dst = *it->second;
  };
  for (auto* p : params) {
    restore(p->name, p->value);
    p->zero_grad();
  }
  for (auto* b : buffers) restore(b->name, b->value);
}

}  // namespace im2flow
