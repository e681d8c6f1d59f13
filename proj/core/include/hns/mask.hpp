#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/types.h>

namespace hns {

/// Row-major binary image with values in {0, 1}.
class Mask {
 public:
  Mask() = default;
  Mask(int64_t height, int64_t width, uint8_t fill = 0);
  Mask(int64_t height, int64_t width, std::vector<uint8_t> data);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t size() const { return height_ * width_; }
  bool empty() const { return size() == 0; }

  uint8_t operator()(int64_t row, int64_t col) const { return data_[row * width_ + col]; }
  uint8_t& operator()(int64_t row, int64_t col) { return data_[row * width_ + col]; }

  std::span<const uint8_t> data() const { return data_; }
  std::span<uint8_t> data() { return data_; }

  int64_t count() const;
  bool any() const { return count() > 0; }

  /// Throws ValidationError if any value is outside {0, 1}.
  void validate_binary() const;

  Mask crop(int64_t row, int64_t col, int64_t height, int64_t width) const;
  Mask inverted() const;

  /// Float tensor of shape [1, H, W].
  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;
  /// Thresholds a 2-D (or [1, H, W]) tensor: value >= threshold becomes 1.
  static Mask from_tensor(const torch::Tensor& tensor, double threshold = 0.5);

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int64_t height_ = 0;
  int64_t width_ = 0;
  std::vector<uint8_t> data_;
};

}  // namespace hns
