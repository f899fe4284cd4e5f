#include "segbench/model.hpp"

#include "segbench/error.hpp"

namespace segbench {
namespace F = torch::nn::functional;

SegmentationModelImpl::SegmentationModelImpl(ViTEncoder enc, DecoderKind kind, int num_classes,
                                             const MaskDecoderConfig& mask_cfg)
    : kind_(kind), num_classes_(num_classes) {
  encoder = register_module("encoder", std::move(enc));
  if (kind == DecoderKind::kLinear) {
    linear = register_module("decoder", LinearDecoder(LinearDecoderConfig{num_classes, encoder->width()}));
  } else {
    MaskDecoderConfig cfg = mask_cfg;
    cfg.num_classes = num_classes;
    cfg.width = encoder->width();
    mask = register_module("decoder", MaskDecoder(cfg));
  }
}

torch::Tensor SegmentationModelImpl::loss(const torch::Tensor& images, const torch::Tensor& labels) {
  auto tokens = encoder->forward(images);
  if (kind_ == DecoderKind::kLinear) {
    auto logits = linear->forward(tokens, static_cast<int>(images.size(2)), static_cast<int>(images.size(3)));
    return F::cross_entropy(logits, labels, F::CrossEntropyFuncOptions().ignore_index(255));
  }
  auto out = mask->forward(tokens);
  std::vector<MaskTargets> targets;
  for (int64_t b = 0; b < labels.size(0); ++b) targets.push_back(targets_from_label(labels[b], num_classes_));
  auto total = mask_loss(out.final, targets, mask->config()).total;
  for (const auto& aux : out.aux) total = total + mask_loss(aux, targets, mask->config()).total;
  return total;
}

torch::Tensor SegmentationModelImpl::predict(const torch::Tensor& images) {
  const auto h = images.size(2), w = images.size(3);
  auto tokens = encoder->forward(images);
  if (kind_ == DecoderKind::kLinear) return linear->forward(tokens, static_cast<int>(h), static_cast<int>(w));
  auto out = mask->forward(tokens);
  auto scores = semantic_inference(out.final.class_logits, out.final.mask_logits);
  return F::interpolate(scores, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{h, w})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

std::vector<torch::Tensor> SegmentationModelImpl::encoder_parameters() const { return encoder->parameters(true); }

std::vector<torch::Tensor> SegmentationModelImpl::decoder_parameters() const {
  return kind_ == DecoderKind::kLinear ? linear->parameters(true) : mask->parameters(true);
}

std::int64_t count_trainable_params(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters(true)) {
    if (p.requires_grad()) n += p.numel();
  }
  return n;
}

void set_trainable(SegmentationModel& model, bool freeze) {
  set_trainable(model->encoder, freeze);
  for (auto& p : model->decoder_parameters()) p.set_requires_grad(true);
}

torch::Tensor image_to_tensor(const std::uint8_t* rgb, int height, int width) {
  static const float kMean[3] = {0.485f, 0.456f, 0.406f};
  static const float kStd[3] = {0.229f, 0.224f, 0.225f};
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(rgb), {height, width, 3}, torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0);
  auto mean = torch::tensor({kMean[0], kMean[1], kMean[2]}).view({3, 1, 1});
  auto std = torch::tensor({kStd[0], kStd[1], kStd[2]}).view({3, 1, 1});
  return ((chw - mean) / std).contiguous();
}

}  // namespace segbench
