#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "im2flow/nn.hpp"

namespace im2flow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { Im2Flow = 1, Classifier = 2 };

struct NamedTensor {
  std::string name;
  nn::Tensor<float> value;
};

/// Binary layout (little endian):
///   "I2FC" | u32 version | u32 kind | u32 header length | JSON header |
///   u32 tensor count | per tensor: u32 name length, name, 4 x i32 dims,
///   float32 values.
struct CheckpointData {
  CheckpointKind kind = CheckpointKind::Im2Flow;
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path);

/// Throws InputError("corrupt checkpoint ...") on bad magic or truncation,
/// VersionError on a version mismatch and InputError on a kind mismatch.
CheckpointData read_checkpoint(const std::filesystem::path& path, CheckpointKind expected);

/// Collects parameters and buffers under their names.
std::vector<NamedTensor> collect_tensors(const std::vector<nn::Parameter<float>*>& params,
                                         const std::vector<nn::Buffer<float>*>& buffers);

/// Copies tensors into parameters/buffers by name. Throws InputError naming
/// the tensor on a missing entry or a shape mismatch.
void restore_tensors(const std::vector<NamedTensor>& tensors, const std::vector<nn::Parameter<float>*>& params,
                     const std::vector<nn::Buffer<float>*>& buffers);

}  // namespace im2flow
