#pragma once

#include <vector>

#include <torch/torch.h>

#include "segbench/config.hpp"
#include "segbench/decoders.hpp"
#include "segbench/encoder.hpp"

namespace segbench {

/// Encoder plus one decoder head. Decoders consume only the patch-token grid.
class SegmentationModelImpl : public torch::nn::Module {
 public:
  SegmentationModelImpl(ViTEncoder encoder, DecoderKind kind, int num_classes, const MaskDecoderConfig& mask_cfg = {});

  /// Training loss for images [B, 3, H, W] and labels [B, H, W] (int64, 255 = ignore).
  torch::Tensor loss(const torch::Tensor& images, const torch::Tensor& labels);
  /// Per-pixel class scores [B, K, H, W] at the input resolution.
  torch::Tensor predict(const torch::Tensor& images);

  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> decoder_parameters() const;

  DecoderKind kind() const { return kind_; }
  int num_classes() const { return num_classes_; }

  ViTEncoder encoder{nullptr};
  LinearDecoder linear{nullptr};
  MaskDecoder mask{nullptr};

 private:
  DecoderKind kind_;
  int num_classes_;
};
TORCH_MODULE(SegmentationModel);

/// Number of parameter elements with requires_grad set.
std::int64_t count_trainable_params(const torch::nn::Module& module);

/// Freezes or unfreezes the encoder; decoder parameters stay trainable.
void set_trainable(SegmentationModel& model, bool freeze);

/// uint8 HWC RGB buffer -> normalized float [3, H, W] (ImageNet mean/std).
torch::Tensor image_to_tensor(const std::uint8_t* rgb, int height, int width);

}  // namespace segbench
