#pragma once

#include <cstdint>

#include <torch/nn.h>

namespace hns {

struct BorderOutput {
  torch::Tensor prob;     ///< [B, 1, h, w] in (0, 1)
  torch::Tensor logits;   ///< [B, 1, h, w]
  torch::Tensor feature;  ///< X_b: [B, C_b, h, w], input of the final projection
};

/// Border detector at one hierarchy level: 3x3 conv + ReLU gives the border
/// feature, a second 3x3 conv projects it to one logit per pixel.
class BorderHeadImpl : public torch::nn::Module {
 public:
  BorderHeadImpl(int64_t in_channels, int64_t border_channels);
  BorderOutput forward(const torch::Tensor& road_feature);

  torch::nn::Conv2d& feature_conv() { return feature_conv_; }
  torch::nn::Conv2d& projection() { return projection_; }

 private:
  int64_t in_channels_;
  torch::nn::Conv2d feature_conv_{nullptr};
  torch::nn::Conv2d projection_{nullptr};
};
TORCH_MODULE(BorderHead);

}  // namespace hns
