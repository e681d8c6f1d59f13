#include "hns/data_pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace {

// Minimum over a clamped 1-D window along rows (axis 0) or columns (axis 1).
std::vector<uint8_t> window_min(const std::vector<uint8_t>& in, int64_t h, int64_t w, int radius,
                                int axis) {
  std::vector<uint8_t> out(in.size());
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      uint8_t m = 1;
      if (axis == 0) {
        const int64_t lo = std::max<int64_t>(0, r - radius), hi = std::min<int64_t>(h - 1, r + radius);
        for (int64_t k = lo; k <= hi && m; ++k) m = std::min(m, in[k * w + c]);
      } else {
        const int64_t lo = std::max<int64_t>(0, c - radius), hi = std::min<int64_t>(w - 1, c + radius);
        for (int64_t k = lo; k <= hi && m; ++k) m = std::min(m, in[r * w + k]);
      }
      out[r * w + c] = m;
    }
  }
  return out;
}

}  // namespace

Mask extract_border(const Mask& mask, int radius) {
  if (radius < 1) throw ValidationError("border radius must be >= 1");
  mask.validate_binary();
  const int64_t h = mask.height(), w = mask.width();
  std::vector<uint8_t> src(mask.data().begin(), mask.data().end());
  auto eroded = window_min(window_min(src, h, w, radius, 1), h, w, radius, 0);
  std::vector<uint8_t> border(src.size());
  for (size_t i = 0; i < src.size(); ++i) border[i] = static_cast<uint8_t>(src[i] && !eroded[i]);
  return Mask(h, w, std::move(border));
}

std::vector<Mask> border_pyramid(const Mask& border, const std::vector<int>& strides) {
  std::vector<Mask> levels;
  levels.reserve(strides.size());
  for (int s : strides) {
    if (s < 1 || border.height() % s != 0 || border.width() % s != 0) {
      std::ostringstream msg;
      msg << "stride " << s << " does not divide mask dims " << border.height() << "x"
          << border.width();
      throw ValidationError(msg.str());
    }
    Mask level(border.height() / s, border.width() / s);
    for (int64_t r = 0; r < border.height(); ++r) {
      for (int64_t c = 0; c < border.width(); ++c) {
        if (border(r, c)) level(r / s, c / s) = 1;
      }
    }
    levels.push_back(std::move(level));
  }
  return levels;
}

BalanceWeights balance_weights(const Mask& target) {
  if (target.empty()) throw ValidationError("cannot balance an empty mask");
  target.validate_binary();
  const double total = static_cast<double>(target.size());
  const double positives = static_cast<double>(target.count());
  return {(total - positives) / total, positives / total};
}

RoadSample make_sample(torch::Tensor image, Mask road_mask, const std::vector<int>& strides,
                       std::string name) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw ValidationError("image must have shape [3, H, W]");
  }
  if (image.size(1) != road_mask.height() || image.size(2) != road_mask.width()) {
    throw ValidationError("image and road mask differ in spatial size");
  }
  RoadSample sample;
  sample.image = std::move(image);
  const auto weights = balance_weights(road_mask);
  sample.pos_weight = weights.pos;
  sample.neg_weight = weights.neg;
  sample.border_strides = strides;
  if (!strides.empty()) {
    sample.border_masks = border_pyramid(extract_border(road_mask, 1), strides);
    for (const auto& level : sample.border_masks) sample.border_weights.push_back(balance_weights(level));
  }
  sample.road_mask = std::move(road_mask);
  sample.name = std::move(name);
  return sample;
}

Batch collate(const std::vector<RoadSample>& samples) {
  if (samples.empty()) throw ValidationError("cannot collate an empty sample list");
  Batch batch;
  batch.strides = samples.front().border_strides;
  std::vector<torch::Tensor> images, roads;
  std::vector<double> pos, neg;
  const size_t levels = batch.strides.size();
  std::vector<std::vector<torch::Tensor>> borders(levels);
  std::vector<std::vector<double>> bpos(levels), bneg(levels);
  for (const auto& s : samples) {
    if (s.border_strides != batch.strides) throw ValidationError("samples disagree on border strides");
    images.push_back(s.image);
    roads.push_back(s.road_mask.to_tensor());
    pos.push_back(s.pos_weight);
    neg.push_back(s.neg_weight);
    for (size_t l = 0; l < levels; ++l) {
      borders[l].push_back(s.border_masks[l].to_tensor());
      bpos[l].push_back(s.border_weights[l].pos);
      bneg[l].push_back(s.border_weights[l].neg);
    }
  }
  auto as_tensor = [](const std::vector<double>& v) {
    return torch::tensor(v, torch::kFloat64).to(torch::kFloat32);
  };
  batch.images = torch::stack(images);
  batch.road = torch::stack(roads);
  batch.road_pos_weight = as_tensor(pos);
  batch.road_neg_weight = as_tensor(neg);
  for (size_t l = 0; l < levels; ++l) {
    batch.borders.push_back(torch::stack(borders[l]));
    batch.border_pos_weight.push_back(as_tensor(bpos[l]));
    batch.border_neg_weight.push_back(as_tensor(bneg[l]));
  }
  return batch;
}

Batch Batch::to(torch::Dtype dtype) const {
  Batch out = *this;
  out.images = images.to(dtype);
  out.road = road.to(dtype);
  out.road_pos_weight = road_pos_weight.to(dtype);
  out.road_neg_weight = road_neg_weight.to(dtype);
  for (size_t l = 0; l < borders.size(); ++l) {
    out.borders[l] = borders[l].to(dtype);
    out.border_pos_weight[l] = border_pos_weight[l].to(dtype);
    out.border_neg_weight[l] = border_neg_weight[l].to(dtype);
  }
  return out;
}

RawTile MemoryTileSource::load(int64_t index) const { return tiles_.at(static_cast<size_t>(index)); }

std::string MemoryTileSource::name(int64_t index) const {
  const auto& tile = tiles_.at(static_cast<size_t>(index));
  return tile.name.empty() ? "tile_" + std::to_string(index) : tile.name;
}

DirectoryTileSource::DirectoryTileSource(std::filesystem::path image_dir,
                                         std::filesystem::path mask_dir) {
  namespace fs = std::filesystem;
  auto is_image = [](const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".jpg" || ext == ".jpeg";
  };
  auto scan = [&](const fs::path& dir) {
    std::map<std::string, fs::path> by_stem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image(entry.path())) {
        by_stem[entry.path().stem().string()] = entry.path();
      }
    }
    return by_stem;
  };
  const auto images = scan(image_dir);
  const auto masks = scan(mask_dir);
  std::vector<std::string> offenders;
  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) offenders.push_back("image without mask: " + path.string());
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) offenders.push_back("mask without image: " + path.string());
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "dataset pairing mismatch (" << offenders.size() << "):";
    for (const auto& o : offenders) msg << "\n  " << o;
    throw ValidationError(msg.str());
  }
  for (const auto& [stem, path] : images) pairs_.emplace_back(path, masks.at(stem));
}

RawTile DirectoryTileSource::load(int64_t index) const {
  const auto& [image_path, mask_path] = pairs_.at(static_cast<size_t>(index));
  RawTile tile{read_image(image_path), read_mask(mask_path), image_path.stem().string()};
  if (tile.image.size(1) != tile.mask.height() || tile.image.size(2) != tile.mask.width()) {
    throw ValidationError("image and mask sizes differ for " + image_path.string());
  }
  return tile;
}

std::string DirectoryTileSource::name(int64_t index) const {
  return pairs_.at(static_cast<size_t>(index)).first.stem().string();
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finaliser over a combined word
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset::Dataset(DatasetSpec spec, std::shared_ptr<const TileSource> source)
    : spec_(std::move(spec)), source_(std::move(source)) {
  if (!source_) throw ValidationError("dataset requires a tile source");
  if (spec_.crop_size < 1) throw ValidationError("crop_size must be positive");
  if (spec_.tile_stride < 0) throw ValidationError("tile_stride must be non-negative");
}

Dataset Dataset::open(const DatasetSpec& spec) {
  return Dataset(spec, std::make_shared<DirectoryTileSource>(spec.image_dir, spec.mask_dir));
}

std::pair<int64_t, int64_t> Dataset::crop_origin(int64_t index, int64_t epoch, int64_t height,
                                                 int64_t width) const {
  const int64_t crop = spec_.crop_size;
  if (crop > height || crop > width) {
    std::ostringstream msg;
    msg << "crop_size " << crop << " exceeds tile " << source_->name(index) << " (" << height << "x"
        << width << ")";
    throw ValidationError(msg.str());
  }
  std::mt19937_64 rng(mix_seed(mix_seed(spec_.seed, static_cast<uint64_t>(epoch)),
                               static_cast<uint64_t>(index)));
  std::uniform_int_distribution<int64_t> rows(0, height - crop), cols(0, width - crop);
  const int64_t r = rows(rng);
  return {r, cols(rng)};
}

RoadSample Dataset::sample_crop(int64_t index, int64_t epoch, const std::vector<int>& strides) const {
  auto tile = source_->load(index);
  const auto [row, col] = crop_origin(index, epoch, tile.mask.height(), tile.mask.width());
  const int64_t crop = spec_.crop_size;
  auto image = tile.image.slice(1, row, row + crop).slice(2, col, col + crop).contiguous();
  return make_sample(std::move(image), tile.mask.crop(row, col, crop, crop), strides, tile.name);
}

RoadSample Dataset::full_sample(int64_t index, const std::vector<int>& strides) const {
  auto tile = source_->load(index);
  std::vector<int> usable;
  for (int s : strides) {
    if (tile.mask.height() % s == 0 && tile.mask.width() % s == 0) usable.push_back(s);
  }
  return make_sample(std::move(tile.image), std::move(tile.mask), usable, tile.name);
}

std::vector<int64_t> Dataset::epoch_order(int64_t epoch) const {
  std::vector<int64_t> order(static_cast<size_t>(size()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(spec_.seed ^ 0x5bd1e995ULL, static_cast<uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace hns
