#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "segbench/registry.hpp"
#include "segbench/tensor_archive.hpp"

namespace segbench {

/// Patch-embedding convolution weights [width, channels, p, p].
struct PatchEmbedKernel {
  torch::Tensor weights;
  int patch = 0;
};

/// Spatial positional embeddings [g, g, width]; the class-token embedding is kept apart.
struct PositionalGrid {
  torch::Tensor grid;
  std::optional<torch::Tensor> class_token;  // [width]
  int size() const { return static_cast<int>(grid.size(0)); }
};

/// Matrix of the bilinear (half-pixel, no antialias) resize from a `from` x `from` patch
/// to `to` x `to`, acting on row-major flattened patches: shape [to*to, from*from], float64.
torch::Tensor bilinear_resize_matrix(int from, int to);

/// Kernel ŵ with <ŵ, B x> = <w, x> for every patch x when target_p >= p,
/// least-squares otherwise. Throws for non-finite weights or target_p < 4.
PatchEmbedKernel resize_patch_embedding(const PatchEmbedKernel& kernel, int target_p);

/// Per-channel bicubic resize with corner-aligned sampling; class token passes through.
PositionalGrid resize_positional_embedding(const PositionalGrid& grid, int target_g);

struct EncoderGeometry {
  int patch = 16;
  int grid = 32;  // tokens per side at the training crop
};

class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int width, int heads);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear qkv{nullptr}, proj{nullptr};

 private:
  int heads_;
};
TORCH_MODULE(Attention);

class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int width, int hidden);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

class BlockImpl : public torch::nn::Module {
 public:
  BlockImpl(int width, int heads, int mlp_ratio, bool layer_scale);
  torch::Tensor forward(torch::Tensor x);
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  Attention attn{nullptr};
  Mlp mlp{nullptr};
  torch::Tensor ls1, ls2;  // undefined without layer scale
};
TORCH_MODULE(Block);

/// Pre-norm ViT. Parameter names follow the timm layout (patch_embed.proj, cls_token,
/// pos_embed, blocks.N.{norm1,attn.qkv,attn.proj,norm2,mlp.fc1,mlp.fc2}, norm).
class ViTEncoderImpl : public torch::nn::Module {
 public:
  ViTEncoderImpl(EncoderSpec spec, EncoderGeometry geometry);

  /// images [B, 3, H, W] -> patch tokens [B, H/p, W/p, width]; class token dropped.
  torch::Tensor forward(const torch::Tensor& images);

  const EncoderSpec& spec() const { return spec_; }
  const EncoderGeometry& geometry() const { return geometry_; }
  int width() const { return spec_.width; }

  PatchEmbedKernel patch_kernel() const;
  PositionalGrid positional_grid() const;
  /// Replaces embeddings; shapes must match the current geometry.
  void set_patch_kernel(const PatchEmbedKernel& kernel);
  void set_positional_grid(const PositionalGrid& grid);

  torch::nn::Conv2d patch_embed_proj{nullptr};
  torch::Tensor cls_token;  // [1, 1, width], undefined without class token
  torch::Tensor pos_embed;  // [1, (cls) + g*g, width]
  torch::nn::LayerNorm norm_pre{nullptr};
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm norm{nullptr};

 private:
  EncoderSpec spec_;
  EncoderGeometry geometry_;
};
TORCH_MODULE(ViTEncoder);

/// Builds an encoder at the target geometry. Random-init specs need no archive; otherwise
/// the archive is read, renamed through data_dir()/name_maps/<family>.map, checked against
/// the native geometry, and its patch/positional embeddings resized to `geometry`.
/// Unmapped extra tensors are reported through `warnings` and otherwise ignored.
ViTEncoder load_checkpoint(const EncoderSpec& spec, EncoderGeometry geometry,
                           std::vector<std::string>* warnings = nullptr);

/// Applies a family name map to archive tensors, yielding canonical names.
TensorMap map_tensor_names(const TensorMap& archive, const std::filesystem::path& map_file, int depth);

/// image [3, H, W] -> tokens [H/p, W/p, width]. Throws when H or W is not divisible by p.
torch::Tensor encode(ViTEncoder& encoder, const torch::Tensor& image);

/// freeze=true stops gradients into every encoder parameter; false re-enables them.
void set_trainable(ViTEncoder& encoder, bool freeze);

}  // namespace segbench
