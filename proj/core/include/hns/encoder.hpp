#pragma once

#include <array>
#include <cstdint>

#include <torch/nn.h>

namespace hns {

enum class NormKind { Batch, Group };

/// Batch or group normalisation over channels, chosen per run.
class Norm2dImpl : public torch::nn::Module {
 public:
  Norm2dImpl(NormKind kind, int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  /// Sets the affine scale and shift (used to build zero-response blocks in tests).
  void fill_affine(double weight, double bias);

 private:
  torch::nn::BatchNorm2d batch_{nullptr};
  torch::nn::GroupNorm group_{nullptr};
};
TORCH_MODULE(Norm2d);

/// ResNet basic block: two 3x3 convs with a projected shortcut when shape changes.
class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride, NormKind norm);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  Norm2d norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d shortcut_conv_{nullptr};
  Norm2d shortcut_norm_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Four feature maps at strides 4, 8, 16 and 32.
struct EncoderOutput {
  std::array<torch::Tensor, 4> levels;
  const torch::Tensor& level(int one_based) const { return levels.at(static_cast<size_t>(one_based - 1)); }
};

inline constexpr int64_t kEncoderStride = 32;

/// 7x7/2 stem plus 3x3/2 pool (stride 4 entry), then two basic blocks per level.
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(std::array<int64_t, 4> widths, NormKind norm);

  /// `image` is [B, 3, H, W] or [3, H, W]; H and W must be multiples of 32.
  EncoderOutput forward(torch::Tensor image);

  const std::array<int64_t, 4>& widths() const { return widths_; }

 private:
  std::array<int64_t, 4> widths_;
  torch::nn::Conv2d stem_conv_{nullptr};
  Norm2d stem_norm_{nullptr};
  std::array<torch::nn::Sequential, 4> stages_;
};
TORCH_MODULE(Encoder);

/// He fan-in init for convs, unit/zero for norms.
void init_weights(torch::nn::Module& module);

}  // namespace hns
