#include "hns/border_head.hpp"

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace nn = torch::nn;

BorderHeadImpl::BorderHeadImpl(int64_t in_channels, int64_t border_channels)
    : in_channels_(in_channels) {
  if (in_channels < 1 || border_channels < 1) throw ConfigError("border head widths must be positive");
  feature_conv_ = register_module(
      "feature_conv", nn::Conv2d(nn::Conv2dOptions(in_channels, border_channels, 3).padding(1)));
  projection_ =
      register_module("projection", nn::Conv2d(nn::Conv2dOptions(border_channels, 1, 3).padding(1)));
}

BorderOutput BorderHeadImpl::forward(const torch::Tensor& road_feature) {
  if (road_feature.dim() != 4 || road_feature.size(1) != in_channels_) {
    throw ValidationError("border head expects [B, " + std::to_string(in_channels_) + ", H, W]");
  }
  BorderOutput out;
  out.feature = torch::relu(feature_conv_->forward(road_feature));
  out.logits = projection_->forward(out.feature);
  out.prob = torch::sigmoid(out.logits);
  return out;
}

}  // namespace hns
