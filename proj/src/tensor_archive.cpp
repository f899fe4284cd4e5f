#include "segbench/tensor_archive.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "segbench/error.hpp"

namespace segbench {
namespace {

torch::ScalarType parse_dtype(const std::string& s, const std::string& key) {
  if (s == "F32") return torch::kFloat32;
  if (s == "F64") return torch::kFloat64;
  if (s == "F16") return torch::kFloat16;
  if (s == "BF16") return torch::kBFloat16;
  throw Error("tensor '" + key + "': unsupported dtype " + s);
}

const char* dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "F32";
    case torch::kFloat64: return "F64";
    case torch::kFloat16: return "F16";
    case torch::kBFloat16: return "BF16";
    default: throw Error("safetensors writer: unsupported dtype");
  }
}

}  // namespace

TensorMap read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight archive '" + path.string() + "'");
  std::uint64_t header_len = 0;
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw Error("'" + path.string() + "': truncated archive");
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size - 8) throw Error("'" + path.string() + "': header length exceeds file size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  const std::uint64_t data_size = file_size - 8 - header_len;
  std::vector<char> data(data_size);
  in.read(data.data(), static_cast<std::streamsize>(data_size));
  if (!in) throw Error("'" + path.string() + "': truncated archive");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + path.string() + "': malformed header: " + e.what());
  }
  TensorMap out;
  for (const auto& [key, info] : meta.items()) {
    if (key == "__metadata__") continue;
    const auto dtype = parse_dtype(info.at("dtype").get<std::string>(), key);
    const auto shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_size) {
      throw Error("tensor '" + key + "': data offsets out of range");
    }
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    const std::uint64_t nbytes = t.numel() * t.element_size();
    if (nbytes != offsets[1] - offsets[0]) throw Error("tensor '" + key + "': byte size does not match shape");
    std::memcpy(t.data_ptr(), data.data() + offsets[0], nbytes);
    if (dtype == torch::kFloat16 || dtype == torch::kBFloat16) t = t.to(torch::kFloat32);
    out[key] = t;
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors) {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<torch::Tensor> ordered;
  std::uint64_t offset = 0;
  for (const auto& [key, t] : tensors) {
    auto c = t.detach().contiguous().cpu();
    const std::uint64_t nbytes = c.numel() * c.element_size();
    meta[key] = {{"dtype", dtype_name(c.scalar_type())},
                 {"shape", c.sizes().vec()},
                 {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
    ordered.push_back(c);
  }
  std::string header = meta.dump();
  while ((header.size() + 8) % 8 != 0) header += ' ';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write weight archive '" + path.string() + "'");
  const std::uint64_t len = header.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : ordered) {
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace segbench
