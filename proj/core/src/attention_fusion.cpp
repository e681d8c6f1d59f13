#include "hns/attention_fusion.hpp"

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor resize_like(const torch::Tensor& x, const torch::Tensor& like) {
  if (x.size(2) == like.size(2) && x.size(3) == like.size(3)) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{like.size(2), like.size(3)})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

ElementAttentionImpl::ElementAttentionImpl(int64_t guide_channels, int64_t feature_channels)
    : guide_channels_(guide_channels), feature_channels_(feature_channels) {
  if (guide_channels < 1 || feature_channels < 1) throw ConfigError("attention widths must be positive");
  gate = register_module("gate", nn::Conv2d(nn::Conv2dOptions(guide_channels + feature_channels, 1, 1)));
  transform = register_module(
      "transform", nn::Conv2d(nn::Conv2dOptions(feature_channels, feature_channels, 1).bias(false)));
}

torch::Tensor ElementAttentionImpl::attention_map(const torch::Tensor& guide, const torch::Tensor& feature) {
  if (guide.dim() != 4 || feature.dim() != 4) throw ValidationError("attention inputs must be [B, C, H, W]");
  if (guide.size(1) != guide_channels_ || feature.size(1) != feature_channels_) {
    throw ValidationError("attention channel mismatch: expected guide " + std::to_string(guide_channels_) +
                          " and feature " + std::to_string(feature_channels_) + ", got " +
                          std::to_string(guide.size(1)) + " and " + std::to_string(feature.size(1)));
  }
  auto resized = resize_like(guide, feature);
  return torch::sigmoid(gate->forward(torch::cat({resized, feature}, 1)));
}

torch::Tensor ElementAttentionImpl::apply(const torch::Tensor& feature, const torch::Tensor& alpha) {
  return transform->forward(feature * alpha + feature);
}

torch::Tensor ElementAttentionImpl::forward(const torch::Tensor& guide, const torch::Tensor& feature) {
  return apply(feature, attention_map(guide, feature));
}

}  // namespace hns
