#include "hns/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

Mask::Mask(int64_t height, int64_t width, uint8_t fill)
    : height_(height), width_(width), data_(static_cast<size_t>(height * width), fill) {
  if (height < 0 || width < 0) throw ValidationError("mask dimensions must be non-negative");
}

Mask::Mask(int64_t height, int64_t width, std::vector<uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0) throw ValidationError("mask dimensions must be non-negative");
  if (static_cast<int64_t>(data_.size()) != height * width) {
    throw ValidationError("mask data size " + std::to_string(data_.size()) + " does not match " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
}

int64_t Mask::count() const {
  return std::accumulate(data_.begin(), data_.end(), int64_t{0});
}

void Mask::validate_binary() const {
  if (std::any_of(data_.begin(), data_.end(), [](uint8_t v) { return v > 1; })) {
    throw ValidationError("mask is not binary: values must be 0 or 1");
  }
}

Mask Mask::crop(int64_t row, int64_t col, int64_t height, int64_t width) const {
  if (row < 0 || col < 0 || height < 0 || width < 0 || row + height > height_ ||
      col + width > width_) {
    throw ValidationError("crop window exceeds mask bounds");
  }
  Mask out(height, width);
  for (int64_t r = 0; r < height; ++r) {
    std::copy_n(data_.begin() + (row + r) * width_ + col, width, out.data_.begin() + r * width);
  }
  return out;
}

Mask Mask::inverted() const {
  Mask out(height_, width_);
  std::transform(data_.begin(), data_.end(), out.data_.begin(),
                 [](uint8_t v) { return static_cast<uint8_t>(v ? 0 : 1); });
  return out;
}

torch::Tensor Mask::to_tensor(torch::Dtype dtype) const {
  auto t = torch::empty({1, height_, width_}, torch::kUInt8);
  std::copy(data_.begin(), data_.end(), t.data_ptr<uint8_t>());
  return t.to(dtype);
}

Mask Mask::from_tensor(const torch::Tensor& tensor, double threshold) {
  auto t = tensor.detach();
  if (t.dim() == 3 && t.size(0) == 1) t = t[0];
  if (t.dim() != 2) throw ValidationError("expected a 2-D map or [1, H, W] tensor");
  auto bin = (t.to(torch::kFloat64) >= threshold).to(torch::kUInt8).contiguous();
  std::vector<uint8_t> data(bin.data_ptr<uint8_t>(), bin.data_ptr<uint8_t>() + bin.numel());
  return Mask(t.size(0), t.size(1), std::move(data));
}

}  // namespace hns
