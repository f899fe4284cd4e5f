#include "segbench/decoders.hpp"

#include <cmath>

#include "segbench/error.hpp"
#include "segbench/hungarian.hpp"

namespace segbench {
namespace F = torch::nn::functional;

namespace {

torch::Tensor upsample(const torch::Tensor& nchw, int64_t h, int64_t w) {
  if (nchw.size(-2) == h && nchw.size(-1) == w) return nchw;
  return F::interpolate(nchw, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{h, w})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
}

}  // namespace

QueryAttentionImpl::QueryAttentionImpl(int dim, int heads) : dim_(dim), heads_(heads) {
  in_proj_weight = register_parameter("in_proj_weight", torch::empty({3 * dim, dim}));
  in_proj_bias = register_parameter("in_proj_bias", torch::zeros({3 * dim}));
  torch::nn::init::xavier_uniform_(in_proj_weight);
  out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
  torch::nn::init::zeros_(out_proj->bias);
}

torch::Tensor QueryAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                          const torch::Tensor& value, const torch::Tensor& blocked) {
  const auto l = query.size(0), s = key.size(0), b = query.size(1);
  const auto head_dim = dim_ / heads_;
  auto project = [&](const torch::Tensor& x, int64_t i, int64_t len) {
    auto y = F::linear(x, in_proj_weight.narrow(0, i * dim_, dim_), in_proj_bias.narrow(0, i * dim_, dim_));
    return y.reshape({len, b, heads_, head_dim}).permute({1, 2, 0, 3});  // [B, heads, len, head_dim]
  };
  auto q = project(query, 0, l), k = project(key, 1, s), v = project(value, 2, s);
  std::optional<torch::Tensor> allowed;
  if (blocked.defined()) allowed = blocked.logical_not().reshape({b, heads_, l, s});
  auto out = at::scaled_dot_product_attention(q, k, v, allowed);
  return out_proj->forward(out.permute({2, 0, 1, 3}).reshape({l, b, dim_}));
}

LinearDecoderImpl::LinearDecoderImpl(LinearDecoderConfig cfg) : cfg_(cfg) {
  if (cfg_.num_classes < 2) throw Error("linear decoder needs K >= 2");
  proj = register_module("proj", torch::nn::Linear(cfg_.width, cfg_.num_classes));
}

torch::Tensor LinearDecoderImpl::forward(const torch::Tensor& tokens, int out_h, int out_w) {
  auto logits = proj->forward(tokens).permute({0, 3, 1, 2});  // [B, K, h, w]
  return upsample(logits, out_h, out_w);
}

torch::Tensor linear_decode(LinearDecoder& decoder, const torch::Tensor& tokens, int crop) {
  return decoder->forward(tokens.unsqueeze(0), crop, crop).squeeze(0);
}

void MaskDecoderConfig::validate() const {
  if (num_classes < 2) throw Error("mask decoder needs K >= 2");
  if (num_queries < 1 || layers < 1 || hidden_dim < 1 || heads < 1 || hidden_dim % heads != 0) {
    throw Error("mask decoder: queries, layers and hidden_dim must be positive, hidden_dim divisible by heads");
  }
  if (!(class_weight > 0 && mask_weight > 0 && dice_weight > 0 && no_object_weight > 0)) {
    throw Error("mask decoder: loss weights must be positive");
  }
}

torch::Tensor sine_position_encoding(int h, int w, int dim) {
  const int half = dim / 2;
  const int per_axis = half;  // channels per axis
  auto y = torch::arange(1, h + 1, torch::kFloat32) / (h + 1e-6) * 2 * M_PI;
  auto x = torch::arange(1, w + 1, torch::kFloat32) / (w + 1e-6) * 2 * M_PI;
  auto idx = torch::arange(per_axis, torch::kFloat32);
  auto dim_t = torch::pow(10000.0, 2 * torch::floor(idx / 2) / per_axis);
  auto py = y.unsqueeze(1) / dim_t;  // [h, per_axis]
  auto px = x.unsqueeze(1) / dim_t;  // [w, per_axis]
  auto even = (torch::arange(per_axis) % 2 == 0);
  py = torch::where(even, py.sin(), py.cos());
  px = torch::where(even, px.sin(), px.cos());
  auto grid_y = py.unsqueeze(1).expand({h, w, per_axis});
  auto grid_x = px.unsqueeze(0).expand({h, w, per_axis});
  auto pos = torch::cat({grid_y, grid_x}, -1).reshape({h * w, 2 * per_axis});
  if (2 * per_axis < dim) pos = torch::cat({pos, torch::zeros({h * w, dim - 2 * per_axis})}, -1);
  return pos;
}

MaskDecoderImpl::MaskDecoderImpl(MaskDecoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.hidden_dim;
  pixel_proj = register_module("pixel_proj", torch::nn::Linear(cfg_.width, d));
  query_feat = register_module("query_feat", torch::nn::Embedding(cfg_.num_queries, d));
  query_embed = register_module("query_embed", torch::nn::Embedding(cfg_.num_queries, d));
  cross_attn = register_module("cross_attn", torch::nn::ModuleList());
  cross_norm = register_module("cross_norm", torch::nn::ModuleList());
  self_attn = register_module("self_attn", torch::nn::ModuleList());
  self_norm = register_module("self_norm", torch::nn::ModuleList());
  ffn1 = register_module("ffn1", torch::nn::ModuleList());
  ffn2 = register_module("ffn2", torch::nn::ModuleList());
  ffn_norm = register_module("ffn_norm", torch::nn::ModuleList());
  for (int i = 0; i < cfg_.layers; ++i) {
    cross_attn->push_back(QueryAttention(d, cfg_.heads));
    cross_norm->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    self_attn->push_back(QueryAttention(d, cfg_.heads));
    self_norm->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    ffn1->push_back(torch::nn::Linear(d, cfg_.ffn_dim));
    ffn2->push_back(torch::nn::Linear(cfg_.ffn_dim, d));
    ffn_norm->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  }
  decoder_norm = register_module("decoder_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  class_embed = register_module("class_embed", torch::nn::Linear(d, cfg_.num_classes + 1));
  mask_embed = register_module("mask_embed", torch::nn::Sequential(torch::nn::Linear(d, d), torch::nn::ReLU(),
                                                                   torch::nn::Linear(d, d), torch::nn::ReLU(),
                                                                   torch::nn::Linear(d, d)));
}

torch::Tensor MaskDecoderImpl::attention_mask(const torch::Tensor& mask_logits) const {
  // [B, Q, h, w] -> [B, Q, hw], true where the predicted mask is off.
  auto blocked = mask_logits.detach().flatten(2).sigmoid() < 0.5;
  auto all_blocked = blocked.all(-1, /*keepdim=*/true);
  blocked = blocked.logical_and(all_blocked.logical_not());
  return blocked.repeat_interleave(cfg_.heads, 0);  // [B*heads, Q, hw]
}

MaskPrediction MaskDecoderImpl::predict(const torch::Tensor& queries, const torch::Tensor& mask_features, int h,
                                        int w) {
  // queries [Q, B, d]; mask_features [B, hw, d]
  auto out = decoder_norm->forward(queries).transpose(0, 1);  // [B, Q, d]
  MaskPrediction p;
  p.class_logits = class_embed->forward(out);
  auto emb = mask_embed->forward(out);  // [B, Q, d]
  p.mask_logits = torch::bmm(emb, mask_features.transpose(1, 2)).reshape({out.size(0), out.size(1), h, w});
  return p;
}

MaskDecoderOutput MaskDecoderImpl::forward(const torch::Tensor& tokens) {
  const auto b = tokens.size(0);
  const int h = static_cast<int>(tokens.size(1));
  const int w = static_cast<int>(tokens.size(2));
  auto features = pixel_proj->forward(tokens).reshape({b, h * w, cfg_.hidden_dim});  // [B, hw, d]
  auto memory = features.transpose(0, 1);                                              // [hw, B, d]
  auto pos = sine_position_encoding(h, w, cfg_.hidden_dim).to(tokens.device()).unsqueeze(1);  // [hw, 1, d]
  auto query_pos = query_embed->weight.unsqueeze(1).expand({cfg_.num_queries, b, cfg_.hidden_dim});
  auto queries = query_feat->weight.unsqueeze(1).expand({cfg_.num_queries, b, cfg_.hidden_dim});

  MaskDecoderOutput result;
  MaskPrediction current = predict(queries, features, h, w);
  for (int i = 0; i < cfg_.layers; ++i) {
    result.aux.push_back(current);
    auto mask = attention_mask(current.mask_logits);
    auto attended = cross_attn[i]->as<QueryAttention>()->forward(queries + query_pos, memory + pos, memory, mask);
    queries = cross_norm[i]->as<torch::nn::LayerNorm>()->forward(queries + attended);

    auto qk = queries + query_pos;
    auto self_out = self_attn[i]->as<QueryAttention>()->forward(qk, qk, queries);
    queries = self_norm[i]->as<torch::nn::LayerNorm>()->forward(queries + self_out);

    auto ff = ffn2[i]->as<torch::nn::Linear>()->forward(torch::relu(ffn1[i]->as<torch::nn::Linear>()->forward(queries)));
    queries = ffn_norm[i]->as<torch::nn::LayerNorm>()->forward(queries + ff);

    current = predict(queries, features, h, w);
  }
  result.final = current;
  return result;
}

MaskPrediction mask_decode(MaskDecoder& decoder, const torch::Tensor& tokens) {
  auto out = decoder->forward(tokens.unsqueeze(0));
  return {out.final.class_logits.squeeze(0), out.final.mask_logits.squeeze(0)};
}

MaskTargets targets_from_label(const torch::Tensor& label, int num_classes, int ignore_index) {
  auto lab = label.to(torch::kInt64);
  MaskTargets t;
  t.valid = (lab != ignore_index).to(torch::kFloat32);
  auto present = std::get<0>(torch::_unique(lab.flatten()));
  std::vector<int64_t> classes;
  auto acc = present.accessor<int64_t, 1>();
  for (int64_t i = 0; i < acc.size(0); ++i) {
    const int64_t c = acc[i];
    if (c == ignore_index) continue;
    if (c < 0 || c >= num_classes) throw Error("label id " + std::to_string(c) + " out of range");
    classes.push_back(c);
  }
  t.classes = torch::tensor(classes, torch::kInt64);
  if (classes.empty()) {
    t.masks = torch::zeros({0, lab.size(0), lab.size(1)});
  } else {
    t.masks = (lab.unsqueeze(0) == t.classes.view({-1, 1, 1})).to(torch::kFloat32);
  }
  return t;
}

PairLosses mask_pair_losses(const torch::Tensor& logits, const torch::Tensor& target, const torch::Tensor& valid) {
  const auto n = valid.sum().clamp_min(1.0);
  auto bce = F::binary_cross_entropy_with_logits(logits, target,
                                                 F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
  PairLosses out;
  out.bce = (bce * valid).sum() / n;
  auto s = logits.sigmoid() * valid;
  auto t = target * valid;
  out.dice = 1.0 - (2.0 * (s * t).sum() + 1.0) / (s.sum() + t.sum() + 1.0);
  return out;
}

torch::Tensor matching_cost(const MaskPrediction& preds, int b, const MaskTargets& targets,
                            const MaskDecoderConfig& cfg) {
  torch::NoGradGuard ng;
  const auto h = targets.valid.size(0), w = targets.valid.size(1);
  auto prob = preds.class_logits[b].softmax(-1);             // [Q, K+1]
  auto cost_class = -prob.index_select(1, targets.classes);  // [Q, T]
  auto logits = upsample(preds.mask_logits[b].unsqueeze(0), h, w).squeeze(0).flatten(1);  // [Q, HW]
  auto valid = targets.valid.flatten();                                                     // [HW]
  auto tgt = targets.masks.flatten(1) * valid;                                              // [T, HW]
  const auto n = valid.sum().clamp_min(1.0);
  auto pos = F::softplus(-logits) * valid;
  auto neg = F::softplus(logits) * valid;
  auto cost_mask = (pos.matmul(tgt.t()) + neg.matmul((valid - tgt).t())) / n;
  auto s = logits.sigmoid() * valid;
  auto cost_dice = 1.0 - (2.0 * s.matmul(tgt.t()) + 1.0) / (s.sum(-1, true) + tgt.sum(-1).unsqueeze(0) + 1.0);
  return cfg.class_weight * cost_class + cfg.mask_weight * cost_mask + cfg.dice_weight * cost_dice;
}

MaskLossTerms mask_loss(const MaskPrediction& preds, const std::vector<MaskTargets>& targets,
                        const MaskDecoderConfig& cfg) {
  const auto batch = preds.class_logits.size(0);
  const auto q = preds.class_logits.size(1);
  const int k = static_cast<int>(preds.class_logits.size(2)) - 1;
  if (static_cast<std::size_t>(batch) != targets.size()) throw Error("mask_loss: batch/target count mismatch");
  auto opts = preds.class_logits.options();
  auto class_weights = torch::ones({k + 1}, opts);
  class_weights[k] = cfg.no_object_weight;

  std::vector<torch::Tensor> ce_terms, bce_terms, dice_terms;
  for (int64_t b = 0; b < batch; ++b) {
    const MaskTargets& t = targets[b];
    const int num_t = static_cast<int>(t.classes.size(0));
    auto tgt_classes = torch::full({q}, k, torch::kInt64);
    if (num_t > 0) {
      auto cost = matching_cost(preds, static_cast<int>(b), t, cfg).to(torch::kFloat64).contiguous();
      std::vector<double> flat(cost.data_ptr<double>(), cost.data_ptr<double>() + cost.numel());
      const auto match = hungarian_match(flat, static_cast<int>(q), num_t);
      auto logits = upsample(preds.mask_logits[b].unsqueeze(0), t.valid.size(0), t.valid.size(1)).squeeze(0);
      for (int j = 0; j < num_t; ++j) {
        tgt_classes[match[j]] = t.classes[j];
        auto pair = mask_pair_losses(logits[match[j]], t.masks[j], t.valid);
        bce_terms.push_back(pair.bce);
        dice_terms.push_back(pair.dice);
      }
    }
    ce_terms.push_back(F::cross_entropy(preds.class_logits[b], tgt_classes,
                                        F::CrossEntropyFuncOptions().weight(class_weights)));
  }
  MaskLossTerms out;
  out.classification = torch::stack(ce_terms).mean();
  auto zero = torch::zeros({}, opts);
  out.mask_bce = bce_terms.empty() ? zero : torch::stack(bce_terms).mean();
  out.dice = dice_terms.empty() ? zero : torch::stack(dice_terms).mean();
  out.total = cfg.class_weight * out.classification + cfg.mask_weight * out.mask_bce + cfg.dice_weight * out.dice;
  return out;
}

torch::Tensor semantic_inference(const torch::Tensor& class_logits, const torch::Tensor& mask_logits) {
  if (class_logits.dim() == 2) return semantic_inference(class_logits.unsqueeze(0), mask_logits.unsqueeze(0)).squeeze(0);
  auto cls = class_logits.softmax(-1);
  cls = cls.narrow(-1, 0, cls.size(-1) - 1);  // [B, Q, K]
  return torch::einsum("bqc,bqhw->bchw", {cls, mask_logits.sigmoid()});
}

}  // namespace segbench
