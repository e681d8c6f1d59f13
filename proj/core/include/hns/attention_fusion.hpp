#pragma once

#include <cstdint>

#include <torch/nn.h>

namespace hns {

/// Bilinear resize of [B, C, h, w] to the spatial size of `like`.
torch::Tensor resize_like(const torch::Tensor& x, const torch::Tensor& like);

/// Element-wise attention: a one-channel gate computed from the concatenated
/// guide and feature, applied residually to the feature before a 1x1 channel
/// transform, out = (X_e * alpha + X_e) W_e.
class ElementAttentionImpl : public torch::nn::Module {
 public:
  ElementAttentionImpl(int64_t guide_channels, int64_t feature_channels);

  /// alpha in [0, 1], shape [B, 1, H, W] at the feature's resolution.
  torch::Tensor attention_map(const torch::Tensor& guide, const torch::Tensor& feature);
  /// Gate and transform with a given alpha.
  torch::Tensor apply(const torch::Tensor& feature, const torch::Tensor& alpha);
  torch::Tensor forward(const torch::Tensor& guide, const torch::Tensor& feature);

  int64_t guide_channels() const { return guide_channels_; }
  int64_t feature_channels() const { return feature_channels_; }

  torch::nn::Conv2d gate{nullptr};       ///< (C_g + C_e) -> 1, with bias
  torch::nn::Conv2d transform{nullptr};  ///< W_e, C_e -> C_e, no bias

 private:
  int64_t guide_channels_;
  int64_t feature_channels_;
};
TORCH_MODULE(ElementAttention);

}  // namespace hns
