#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"

namespace hns {

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  auto hwc = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8);
  // BGR -> RGB, HWC -> CHW
  return hwc.flip({2}).permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat grey = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (grey.empty()) throw IoError("cannot read mask " + path.string());
  std::vector<uint8_t> data(static_cast<size_t>(grey.rows) * grey.cols);
  for (int r = 0; r < grey.rows; ++r) {
    const uint8_t* row = grey.ptr<uint8_t>(r);
    for (int c = 0; c < grey.cols; ++c) data[static_cast<size_t>(r) * grey.cols + c] = row[c] >= 128;
  }
  return Mask(grey.rows, grey.cols, std::move(data));
}

void write_image(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ValidationError("image must be [3, H, W]");
  auto hwc = image.detach()
                 .to(torch::kFloat32)
                 .clamp(0.0, 1.0)
                 .mul(255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .flip({2})
                 .contiguous();
  cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr());
  write_mat(path, mat);
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat mat(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
  for (int64_t r = 0; r < mask.height(); ++r) {
    for (int64_t c = 0; c < mask.width(); ++c) {
      mat.at<uint8_t>(static_cast<int>(r), static_cast<int>(c)) = mask(r, c) ? 255 : 0;
    }
  }
  write_mat(path, mat);
}

void write_probability(const std::filesystem::path& path, const torch::Tensor& prob) {
  auto p = prob.detach();
  if (p.dim() == 3 && p.size(0) == 1) p = p[0];
  if (p.dim() != 2) throw ValidationError("probability map must be [H, W] or [1, H, W]");
  auto bytes = p.to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).contiguous();
  cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1,
              bytes.data_ptr());
  write_mat(path, mat);
}

torch::Tensor render_overlay(const torch::Tensor& image, const Mask& road, const Mask* border) {
  auto out = image.detach().to(torch::kFloat32).clone();
  const double alpha = 0.6;
  auto blend = [&](const Mask& m, float r, float g, float b) {
    auto sel = m.to_tensor().to(torch::kBool)[0];
    const float colour[3] = {r, g, b};
    for (int ch = 0; ch < 3; ++ch) {
      auto plane = out[ch];
      plane.copy_(torch::where(sel, plane * (1.0 - alpha) + alpha * colour[ch], plane));
    }
  };
  blend(road, 1.0f, 0.0f, 0.0f);
  if (border != nullptr) {
    if (border->height() == road.height() && border->width() == road.width()) {
      blend(*border, 0.0f, 1.0f, 1.0f);
    }
  }
  return out;
}

}  // namespace hns
