#include "segbench/encoder.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "segbench/error.hpp"

namespace segbench {
namespace F = torch::nn::functional;
namespace {

// Bicubic resize of a [C, h, w] tensor to (out_h, out_w), corner-aligned.
torch::Tensor bicubic_chw(const torch::Tensor& chw, int out_h, int out_w) {
  return F::interpolate(chw.unsqueeze(0), F::InterpolateFuncOptions()
                                              .size(std::vector<int64_t>{out_h, out_w})
                                              .mode(torch::kBicubic)
                                              .align_corners(true))
      .squeeze(0);
}

torch::Tensor pinv_resize_matrix(int from, int to) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, torch::Tensor> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(from, to);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  // ŵ = pinv(Bᵀ) w, i.e. flattened kernels (rows) times pinv(B).
  torch::Tensor pinv = torch::linalg_pinv(bilinear_resize_matrix(from, to));
  cache.emplace(key, pinv);
  return pinv;
}

}  // namespace

torch::Tensor bilinear_resize_matrix(int from, int to) {
  const int n = from * from;
  auto basis = torch::eye(n, torch::kFloat64).reshape({n, 1, from, from});
  auto resized = F::interpolate(basis, F::InterpolateFuncOptions()
                                           .size(std::vector<int64_t>{to, to})
                                           .mode(torch::kBilinear)
                                           .align_corners(false)
                                           .antialias(false));
  return resized.reshape({n, to * to}).t().contiguous();
}

PatchEmbedKernel resize_patch_embedding(const PatchEmbedKernel& kernel, int target_p) {
  if (target_p < 4) throw Error("patch-embed resize: target patch " + std::to_string(target_p) + " is below 4");
  if (!torch::isfinite(kernel.weights).all().item<bool>()) {
    throw Error("patch-embed resize: kernel has non-finite entries");
  }
  if (target_p == kernel.patch) return {kernel.weights.clone(), kernel.patch};
  const auto sizes = kernel.weights.sizes();
  const int p = kernel.patch;
  auto flat = kernel.weights.detach().to(torch::kFloat64).reshape({sizes[0] * sizes[1], p * p});
  auto resized = flat.matmul(pinv_resize_matrix(p, target_p));
  return {resized.reshape({sizes[0], sizes[1], target_p, target_p}).to(kernel.weights.scalar_type()), target_p};
}

PositionalGrid resize_positional_embedding(const PositionalGrid& grid, int target_g) {
  if (target_g < 2) throw Error("positional resize: target grid " + std::to_string(target_g) + " is below 2");
  PositionalGrid out;
  out.class_token = grid.class_token;
  if (target_g == grid.size()) {
    out.grid = grid.grid.clone();
    return out;
  }
  auto chw = grid.grid.permute({2, 0, 1});
  out.grid = bicubic_chw(chw, target_g, target_g).permute({1, 2, 0}).contiguous();
  return out;
}

AttentionImpl::AttentionImpl(int width, int heads) : heads_(heads) {
  qkv = register_module("qkv", torch::nn::Linear(width, 3 * width));
  proj = register_module("proj", torch::nn::Linear(width, width));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), n = x.size(1), c = x.size(2);
  auto qkv_out = qkv->forward(x).reshape({b, n, 3, heads_, c / heads_}).permute({2, 0, 3, 1, 4});
  auto attn = at::scaled_dot_product_attention(qkv_out[0], qkv_out[1], qkv_out[2]);
  return proj->forward(attn.transpose(1, 2).reshape({b, n, c}));
}

MlpImpl::MlpImpl(int width, int hidden) {
  fc1 = register_module("fc1", torch::nn::Linear(width, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, width));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2->forward(torch::gelu(fc1->forward(x))); }

BlockImpl::BlockImpl(int width, int heads, int mlp_ratio, bool layer_scale) {
  auto ln = torch::nn::LayerNormOptions({width}).eps(1e-6);
  norm1 = register_module("norm1", torch::nn::LayerNorm(ln));
  attn = register_module("attn", Attention(width, heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(ln));
  mlp = register_module("mlp", Mlp(width, width * mlp_ratio));
  if (layer_scale) {
    ls1 = register_parameter("ls1", torch::full({width}, 1e-5));
    ls2 = register_parameter("ls2", torch::full({width}, 1e-5));
  }
}

torch::Tensor BlockImpl::forward(torch::Tensor x) {
  auto a = attn->forward(norm1->forward(x));
  x = x + (ls1.defined() ? a * ls1 : a);
  auto m = mlp->forward(norm2->forward(x));
  return x + (ls2.defined() ? m * ls2 : m);
}

ViTEncoderImpl::ViTEncoderImpl(EncoderSpec spec, EncoderGeometry geometry)
    : spec_(std::move(spec)), geometry_(geometry) {
  spec_.validate();
  if (geometry_.patch < 1 || geometry_.grid < 1) throw Error("encoder geometry must be positive");
  const int w = spec_.width;
  patch_embed_proj = torch::nn::Conv2d(torch::nn::Conv2dOptions(3, w, geometry_.patch).stride(geometry_.patch));
  // Registered under the timm path "patch_embed.proj".
  auto patch_embed = register_module("patch_embed", std::make_shared<torch::nn::Module>());
  patch_embed->register_module("proj", patch_embed_proj);
  const int tokens = geometry_.grid * geometry_.grid + (spec_.has_class_token ? 1 : 0);
  if (spec_.has_class_token) cls_token = register_parameter("cls_token", torch::randn({1, 1, w}) * 0.02);
  pos_embed = register_parameter("pos_embed", torch::randn({1, tokens, w}) * 0.02);
  if (spec_.pre_norm) norm_pre = register_module("norm_pre", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w}).eps(1e-5)));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < spec_.depth; ++i) blocks->push_back(Block(w, spec_.heads, spec_.mlp_ratio, spec_.layer_scale));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w}).eps(1e-6)));
}

torch::Tensor ViTEncoderImpl::forward(const torch::Tensor& images) {
  const int p = geometry_.patch;
  if (images.dim() != 4 || images.size(1) != 3) throw Error("encoder expects images [B, 3, H, W]");
  if (images.size(2) % p != 0 || images.size(3) % p != 0) {
    throw Error("image " + std::to_string(images.size(2)) + "x" + std::to_string(images.size(3)) +
                " is not divisible by patch size " + std::to_string(p));
  }
  auto x = patch_embed_proj->forward(images);  // [B, C, h, w]
  const auto b = x.size(0), h = x.size(2), w = x.size(3);
  x = x.flatten(2).transpose(1, 2);  // [B, h*w, C]

  const int offset = spec_.has_class_token ? 1 : 0;
  auto spatial = pos_embed.narrow(1, offset, pos_embed.size(1) - offset);
  if (h != geometry_.grid || w != geometry_.grid) {
    auto chw = spatial.reshape({geometry_.grid, geometry_.grid, spec_.width}).permute({2, 0, 1});
    spatial = bicubic_chw(chw, static_cast<int>(h), static_cast<int>(w)).permute({1, 2, 0}).reshape({1, h * w, spec_.width});
  }
  x = x + spatial;
  if (spec_.has_class_token) {
    auto cls = cls_token + pos_embed.narrow(1, 0, 1);
    x = torch::cat({cls.expand({b, 1, spec_.width}), x}, 1);
  }
  if (norm_pre) x = norm_pre->forward(x);
  for (const auto& blk : *blocks) x = blk->as<Block>()->forward(x);
  x = norm->forward(x);
  return x.narrow(1, offset, h * w).reshape({b, h, w, spec_.width});
}

PatchEmbedKernel ViTEncoderImpl::patch_kernel() const {
  return {patch_embed_proj->weight.detach().clone(), geometry_.patch};
}

PositionalGrid ViTEncoderImpl::positional_grid() const {
  PositionalGrid g;
  const int offset = spec_.has_class_token ? 1 : 0;
  g.grid = pos_embed.detach()
               .narrow(1, offset, pos_embed.size(1) - offset)
               .reshape({geometry_.grid, geometry_.grid, spec_.width})
               .clone();
  if (offset) g.class_token = pos_embed.detach()[0][0].clone();
  return g;
}

void ViTEncoderImpl::set_patch_kernel(const PatchEmbedKernel& kernel) {
  if (kernel.weights.sizes() != patch_embed_proj->weight.sizes()) {
    throw Error("patch kernel shape does not match encoder geometry");
  }
  torch::NoGradGuard ng;
  patch_embed_proj->weight.copy_(kernel.weights);
}

void ViTEncoderImpl::set_positional_grid(const PositionalGrid& grid) {
  if (grid.size() != geometry_.grid || grid.grid.size(2) != spec_.width) {
    throw Error("positional grid " + std::to_string(grid.size()) + " does not match encoder grid " +
                std::to_string(geometry_.grid));
  }
  torch::NoGradGuard ng;
  const int offset = spec_.has_class_token ? 1 : 0;
  pos_embed.narrow(1, offset, pos_embed.size(1) - offset)
      .copy_(grid.grid.reshape({1, geometry_.grid * geometry_.grid, spec_.width}));
  if (offset && grid.class_token) pos_embed[0][0].copy_(*grid.class_token);
}

TensorMap map_tensor_names(const TensorMap& archive, const std::filesystem::path& map_file, int depth) {
  struct Rename {
    std::regex pattern;
    std::string replacement;
  };
  struct Concat {
    std::string target;
    std::vector<std::string> sources;
  };
  std::vector<Rename> renames;
  std::vector<std::regex> ignores;
  std::vector<Concat> concats;

  std::ifstream in(map_file);
  if (!in) throw Error("cannot open name map '" + map_file.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string op;
    if (!(ls >> op) || op[0] == '#') continue;
    if (op == "rename") {
      std::string from, to;
      ls >> from >> to;
      renames.push_back({std::regex(from), to});
    } else if (op == "ignore") {
      std::string pattern;
      ls >> pattern;
      ignores.emplace_back(pattern);
    } else if (op == "concat") {
      Concat c;
      ls >> c.target;
      for (std::string s; ls >> s;) c.sources.push_back(s);
      concats.push_back(std::move(c));
    } else {
      throw Error("name map '" + map_file.string() + "': unknown directive '" + op + "'");
    }
  }

  auto expand = [](std::string s, int i) {
    for (auto pos = s.find("{i}"); pos != std::string::npos; pos = s.find("{i}")) s.replace(pos, 3, std::to_string(i));
    return s;
  };

  TensorMap out;
  std::set<std::string> consumed;
  for (const auto& c : concats) {
    for (int i = 0; i < depth; ++i) {
      std::vector<torch::Tensor> parts;
      for (const auto& src : c.sources) {
        auto it = archive.find(expand(src, i));
        if (it == archive.end()) break;
        parts.push_back(it->second);
      }
      if (parts.size() != c.sources.size()) continue;
      for (const auto& src : c.sources) consumed.insert(expand(src, i));
      out[expand(c.target, i)] = torch::cat(parts, 0);
    }
  }
  for (const auto& [key, tensor] : archive) {
    if (consumed.contains(key)) continue;
    std::string name = key;
    for (const auto& r : renames) {
      if (std::regex_search(name, r.pattern)) {
        name = std::regex_replace(name, r.pattern, r.replacement);
        break;
      }
    }
    bool ignored = false;
    for (const auto& ig : ignores) ignored = ignored || std::regex_search(key, ig);
    if (ignored) continue;
    out[name] = tensor;
  }
  return out;
}

ViTEncoder load_checkpoint(const EncoderSpec& spec, EncoderGeometry geometry, std::vector<std::string>* warnings) {
  if (spec.random_init()) {
    torch::NoGradGuard ng;
    ViTEncoder enc(spec, geometry);
    return enc;
  }
  const TensorMap archive = read_safetensors(spec.checkpoint);
  const auto map_file = data_dir() / "name_maps" / (spec.family + ".map");
  TensorMap tensors = map_tensor_names(archive, map_file, spec.depth);

  // Built at native geometry first so the archive can be shape-checked as-is.
  const EncoderGeometry native{spec.native_patch, spec.native_grid};
  ViTEncoder enc(spec, native);
  torch::NoGradGuard ng;

  // Grid-shaped positional embeddings ([1, g, g, C], e.g. SAM) are flattened.
  if (auto it = tensors.find("pos_embed"); it != tensors.end() && it->second.dim() == 4) {
    it->second = it->second.reshape({1, -1, it->second.size(-1)});
  }
  if (auto it = tensors.find("cls_token"); it != tensors.end() && it->second.dim() == 1) {
    it->second = it->second.reshape({1, 1, -1});
  }
  // OpenCLIP stores positional embeddings as [N, C].
  if (auto it = tensors.find("pos_embed"); it != tensors.end() && it->second.dim() == 2) {
    it->second = it->second.unsqueeze(0);
  }

  std::vector<std::string> missing;
  std::vector<std::string> bad_shape;
  auto params = enc->named_parameters(true);
  for (auto& item : params) {
    auto it = tensors.find(item.key());
    if (it == tensors.end()) {
      missing.push_back(item.key());
      continue;
    }
    if (it->second.sizes() != item.value().sizes()) {
      std::ostringstream msg;
      msg << item.key() << " (archive " << it->second.sizes() << ", expected " << item.value().sizes() << ")";
      bad_shape.push_back(msg.str());
      continue;
    }
    item.value().copy_(it->second);
    tensors.erase(it);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error("checkpoint '" + spec.checkpoint + "' is missing tensors: " + list);
  }
  if (!bad_shape.empty()) {
    std::string list;
    for (const auto& m : bad_shape) list += (list.empty() ? "" : "; ") + m;
    throw Error("checkpoint '" + spec.checkpoint + "' geometry mismatch: " + list);
  }
  if (warnings) {
    for (const auto& [key, _] : tensors) warnings->push_back("ignored unmapped tensor '" + key + "'");
  }

  ViTEncoder target(spec, geometry);
  auto src = enc->named_parameters(true);
  for (auto& item : target->named_parameters(true)) {
    if (item.key() == "patch_embed.proj.weight" || item.key() == "pos_embed") continue;
    item.value().copy_(*src.find(item.key()));
  }
  target->set_patch_kernel(resize_patch_embedding(enc->patch_kernel(), geometry.patch));
  target->set_positional_grid(resize_positional_embedding(enc->positional_grid(), geometry.grid));
  return target;
}

torch::Tensor encode(ViTEncoder& encoder, const torch::Tensor& image) {
  if (image.dim() != 3) throw Error("encode expects an image [3, H, W]");
  return encoder->forward(image.unsqueeze(0)).squeeze(0);
}

void set_trainable(ViTEncoder& encoder, bool freeze) {
  for (auto& p : encoder->parameters(true)) p.set_requires_grad(!freeze);
}

}  // namespace segbench
