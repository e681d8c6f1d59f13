#include "hns/encoder.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace nn = torch::nn;

Norm2dImpl::Norm2dImpl(NormKind kind, int64_t channels) {
  if (kind == NormKind::Batch) {
    batch_ = register_module("bn", nn::BatchNorm2d(channels));
  } else {
    const int64_t groups = std::gcd(channels, int64_t{8});
    group_ = register_module("gn", nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
  }
}

torch::Tensor Norm2dImpl::forward(const torch::Tensor& x) {
  return batch_ ? batch_->forward(x) : group_->forward(x);
}

void Norm2dImpl::fill_affine(double weight, double bias) {
  torch::NoGradGuard guard;
  auto& w = batch_ ? batch_->weight : group_->weight;
  auto& b = batch_ ? batch_->bias : group_->bias;
  w.fill_(weight);
  b.fill_(bias);
}

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return nn::Conv2d(
      nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride,
                               NormKind norm) {
  conv1_ = register_module("conv1", conv(in_channels, out_channels, 3, stride));
  norm1_ = register_module("norm1", Norm2d(norm, out_channels));
  conv2_ = register_module("conv2", conv(out_channels, out_channels, 3, 1));
  norm2_ = register_module("norm2", Norm2d(norm, out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_conv_ = register_module("shortcut_conv", conv(in_channels, out_channels, 1, stride));
    shortcut_norm_ = register_module("shortcut_norm", Norm2d(norm, out_channels));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(norm1_->forward(conv1_->forward(x)));
  out = norm2_->forward(conv2_->forward(out));
  auto identity = shortcut_conv_ ? shortcut_norm_->forward(shortcut_conv_->forward(x)) : x;
  return torch::relu(out + identity);
}

EncoderImpl::EncoderImpl(std::array<int64_t, 4> widths, NormKind norm) : widths_(widths) {
  for (size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ConfigError("encoder widths must be positive");
    if (i > 0 && widths[i] < widths[i - 1]) throw ConfigError("encoder widths must not decrease");
  }
  stem_conv_ = register_module(
      "stem_conv", nn::Conv2d(nn::Conv2dOptions(3, widths[0], 7).stride(2).padding(3).bias(false)));
  stem_norm_ = register_module("stem_norm", Norm2d(norm, widths[0]));
  int64_t in = widths[0];
  for (size_t i = 0; i < 4; ++i) {
    nn::Sequential stage;
    const int64_t stride = i == 0 ? 1 : 2;
    stage->push_back(BasicBlock(in, widths[i], stride, norm));
    stage->push_back(BasicBlock(widths[i], widths[i], 1, norm));
    stages_[i] = register_module("stage" + std::to_string(i + 1), stage);
    in = widths[i];
  }
  init_weights(*this);
}

EncoderOutput EncoderImpl::forward(torch::Tensor image) {
  if (image.dim() == 3) image = image.unsqueeze(0);
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ValidationError("encoder expects [B, 3, H, W] input");
  }
  if (image.size(2) % kEncoderStride != 0 || image.size(3) % kEncoderStride != 0 ||
      image.size(2) == 0 || image.size(3) == 0) {
    std::ostringstream msg;
    msg << "input " << image.size(2) << "x" << image.size(3) << " is not a positive multiple of "
        << kEncoderStride;
    throw ValidationError(msg.str());
  }
  auto x = torch::relu(stem_norm_->forward(stem_conv_->forward(image)));
  x = torch::max_pool2d(x, 3, 2, 1);
  EncoderOutput out;
  for (size_t i = 0; i < 4; ++i) {
    x = stages_[i]->forward(x);
    out.levels[i] = x;
  }
  return out;
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (c->bias.defined()) c->bias.zero_();
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    } else if (auto* gn = m->as<nn::GroupNorm>()) {
      gn->weight.fill_(1.0);
      gn->bias.zero_();
    }
  }
}

}  // namespace hns
