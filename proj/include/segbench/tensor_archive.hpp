#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/types.h>

namespace segbench {

using TensorMap = std::map<std::string, torch::Tensor>;

/// safetensors archives: 8-byte little-endian header length, JSON header, raw buffer.
/// Supported dtypes: F32, F64, F16, BF16 (read as float32 unless F64).
TensorMap read_safetensors(const std::filesystem::path& path);
void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors);

}  // namespace segbench
