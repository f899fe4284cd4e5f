#pragma once

#include <vector>

#include <torch/torch.h>

namespace segbench {

struct LinearDecoderConfig {
  int num_classes = 150;
  int width = 768;
};

/// Per-token affine projection to class scores, bilinearly upsampled to the crop.
class LinearDecoderImpl : public torch::nn::Module {
 public:
  explicit LinearDecoderImpl(LinearDecoderConfig cfg);
  /// tokens [B, h, w, width] -> logits [B, K, out_h, out_w]
  torch::Tensor forward(const torch::Tensor& tokens, int out_h, int out_w);
  torch::nn::Linear proj{nullptr};

 private:
  LinearDecoderConfig cfg_;
};
TORCH_MODULE(LinearDecoder);

/// tokens [g, g, width] -> logits [K, crop, crop].
torch::Tensor linear_decode(LinearDecoder& decoder, const torch::Tensor& tokens, int crop);

struct MaskDecoderConfig {
  int num_classes = 150;
  int width = 768;  // encoder embedding dim
  int num_queries = 100;
  int layers = 9;
  int hidden_dim = 256;
  int heads = 8;
  int ffn_dim = 2048;
  double class_weight = 2.0;
  double mask_weight = 5.0;
  double dice_weight = 5.0;
  double no_object_weight = 0.1;

  void validate() const;
};

/// One set of predictions: class_logits [B, Q, K+1] (last column = no object),
/// mask_logits [B, Q, h, w] at token-grid resolution.
struct MaskPrediction {
  torch::Tensor class_logits;
  torch::Tensor mask_logits;
};

struct MaskDecoderOutput {
  MaskPrediction final;
  std::vector<MaskPrediction> aux;  // one per decoder layer input, for deep supervision
};

/// Sequence-first multi-head attention (query [L, B, d], key/value [S, B, d]) taking a
/// boolean mask [B*heads, L, S] where true blocks the position.
class QueryAttentionImpl : public torch::nn::Module {
 public:
  QueryAttentionImpl(int dim, int heads);
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                        const torch::Tensor& blocked = {});
  torch::Tensor in_proj_weight, in_proj_bias;
  torch::nn::Linear out_proj{nullptr};

 private:
  int dim_;
  int heads_;
};
TORCH_MODULE(QueryAttention);

/// Single-scale mask-classification decoder: a linear pixel projection replaces the
/// pixel decoder, and every layer cross-attends (masked by the previous layer's
/// predicted masks) to the same projected token features.
class MaskDecoderImpl : public torch::nn::Module {
 public:
  explicit MaskDecoderImpl(MaskDecoderConfig cfg);
  /// tokens [B, h, w, width]
  MaskDecoderOutput forward(const torch::Tensor& tokens);
  const MaskDecoderConfig& config() const { return cfg_; }

  /// Boolean attention mask [B*heads, Q, h*w] (true = blocked) derived from mask logits.
  /// Queries whose mask blocks every position fall back to unmasked attention.
  torch::Tensor attention_mask(const torch::Tensor& mask_logits) const;

 private:
  MaskPrediction predict(const torch::Tensor& queries, const torch::Tensor& mask_features, int h, int w);

  MaskDecoderConfig cfg_;
  torch::nn::Linear pixel_proj{nullptr};
  torch::nn::Embedding query_feat{nullptr}, query_embed{nullptr};
  torch::nn::ModuleList cross_attn, cross_norm, self_attn, self_norm, ffn1, ffn2, ffn_norm;
  torch::nn::LayerNorm decoder_norm{nullptr};
  torch::nn::Linear class_embed{nullptr};
  torch::nn::Sequential mask_embed{nullptr};
};
TORCH_MODULE(MaskDecoder);

/// tokens [g, g, width] -> (class_logits [Q, K+1], mask_logits [Q, g, g])
MaskPrediction mask_decode(MaskDecoder& decoder, const torch::Tensor& tokens);

/// 2-D sine positional encoding [h*w, dim] (dim/2 channels per axis).
torch::Tensor sine_position_encoding(int h, int w, int dim);

/// Per-image targets: one binary mask per class present in the label (ignore excluded).
struct MaskTargets {
  torch::Tensor classes;  // [T] int64
  torch::Tensor masks;    // [T, H, W] float
  torch::Tensor valid;    // [H, W] float, 0 on ignore pixels
};

MaskTargets targets_from_label(const torch::Tensor& label, int num_classes, int ignore_index = 255);

struct PairLosses {
  torch::Tensor bce;   // mean over valid pixels
  torch::Tensor dice;  // 1 - (2 sum(s t) + 1) / (sum s + sum t + 1), s = sigmoid
};

/// Dense mask losses of one predicted mask (logits [H, W]) against a binary target.
PairLosses mask_pair_losses(const torch::Tensor& logits, const torch::Tensor& target, const torch::Tensor& valid);

struct MaskLossTerms {
  torch::Tensor total;
  torch::Tensor classification;
  torch::Tensor mask_bce;
  torch::Tensor dice;
};

/// Hungarian-matched loss for one prediction set. Mask logits are bilinearly upsampled
/// to the label resolution. Unmatched queries are supervised as no-object.
MaskLossTerms mask_loss(const MaskPrediction& preds, const std::vector<MaskTargets>& targets,
                        const MaskDecoderConfig& cfg);

/// Matching cost [Q, T] for image b (classification + mask BCE + dice, weighted).
torch::Tensor matching_cost(const MaskPrediction& preds, int b, const MaskTargets& targets,
                            const MaskDecoderConfig& cfg);

/// scores[b, c, y, x] = sum_q softmax(class_logits)[b, q, c] * sigmoid(mask_logits)[b, q, y, x],
/// no-object column dropped. Accepts batched or unbatched ([Q, K+1], [Q, h, w]) inputs.
torch::Tensor semantic_inference(const torch::Tensor& class_logits, const torch::Tensor& mask_logits);

}  // namespace segbench
