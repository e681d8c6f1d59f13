#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "hns/mask.hpp"

namespace hns {

// ---------------------------------------------------------------------------
// Border ground truth and class balance
// ---------------------------------------------------------------------------

/// Inner morphological boundary: road pixels whose (2r+1)x(2r+1) square
/// neighbourhood contains a non-road pixel. Pixels outside the image are
/// ignored, so a cut at the tile edge never produces a border.
Mask extract_border(const Mask& mask, int radius = 1);

/// Max-pools a full-resolution border at each stride (thin lines survive).
std::vector<Mask> border_pyramid(const Mask& border, const std::vector<int>& strides);

struct BalanceWeights {
  double pos = 0.0;  ///< weight on positive pixels = #negatives / #pixels
  double neg = 0.0;  ///< weight on negative pixels = #positives / #pixels
};

BalanceWeights balance_weights(const Mask& target);

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

struct RoadSample {
  torch::Tensor image;  ///< float32 [3, H, W] in [0, 1]
  Mask road_mask;
  std::vector<int> border_strides;
  std::vector<Mask> border_masks;  ///< one per stride, at H/s x W/s
  double pos_weight = 0.0;
  double neg_weight = 0.0;
  std::vector<BalanceWeights> border_weights;
  std::string name;
};

/// Builds a sample from an image/mask pair, deriving border GT for each stride.
RoadSample make_sample(torch::Tensor image, Mask road_mask, const std::vector<int>& strides,
                       std::string name = {});

/// Stacked tensors for a list of equally sized samples.
struct Batch {
  torch::Tensor images;                     ///< [B, 3, H, W]
  torch::Tensor road;                       ///< [B, 1, H, W]
  torch::Tensor road_pos_weight;            ///< [B]
  torch::Tensor road_neg_weight;            ///< [B]
  std::vector<torch::Tensor> borders;       ///< [B, 1, H/s, W/s] per stride
  std::vector<torch::Tensor> border_pos_weight;
  std::vector<torch::Tensor> border_neg_weight;
  std::vector<int> strides;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  Batch to(torch::Dtype dtype) const;
};

Batch collate(const std::vector<RoadSample>& samples);

// ---------------------------------------------------------------------------
// Tile sources
// ---------------------------------------------------------------------------

struct RawTile {
  torch::Tensor image;  ///< float32 [3, H, W] in [0, 1]
  Mask mask;
  std::string name;
};

class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual int64_t size() const = 0;
  virtual RawTile load(int64_t index) const = 0;
  virtual std::string name(int64_t index) const = 0;
};

/// Tiles held in memory (synthetic data, tests).
class MemoryTileSource final : public TileSource {
 public:
  explicit MemoryTileSource(std::vector<RawTile> tiles) : tiles_(std::move(tiles)) {}
  int64_t size() const override { return static_cast<int64_t>(tiles_.size()); }
  RawTile load(int64_t index) const override;
  std::string name(int64_t index) const override;

 private:
  std::vector<RawTile> tiles_;
};

/// Image/mask pairs matched by file stem across two directories. Files are
/// decoded on every load so memory stays bounded for large tiles.
class DirectoryTileSource final : public TileSource {
 public:
  DirectoryTileSource(std::filesystem::path image_dir, std::filesystem::path mask_dir);
  int64_t size() const override { return static_cast<int64_t>(pairs_.size()); }
  RawTile load(int64_t index) const override;
  std::string name(int64_t index) const override;
  const std::filesystem::path& image_path(int64_t index) const { return pairs_.at(index).first; }
  const std::filesystem::path& mask_path(int64_t index) const { return pairs_.at(index).second; }

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs_;
};

// ---------------------------------------------------------------------------
// Datasets and deterministic cropping
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string split = "train";
  std::filesystem::path image_dir;
  std::filesystem::path mask_dir;
  int crop_size = 256;
  uint64_t seed = 0;
  int tile_stride = 0;  ///< test-time tiling stride; 0 means whole-image inference
};

class Dataset {
 public:
  Dataset(DatasetSpec spec, std::shared_ptr<const TileSource> source);
  /// Opens spec.image_dir / spec.mask_dir.
  static Dataset open(const DatasetSpec& spec);

  const DatasetSpec& spec() const { return spec_; }
  const TileSource& source() const { return *source_; }
  int64_t size() const { return source_->size(); }

  /// Random crop of tile `index`, fully determined by (seed, epoch, index).
  /// Borders are derived from the cropped mask.
  RoadSample sample_crop(int64_t index, int64_t epoch, const std::vector<int>& strides) const;

  /// Top-left corner of the crop sample_crop would take.
  std::pair<int64_t, int64_t> crop_origin(int64_t index, int64_t epoch, int64_t height,
                                          int64_t width) const;

  /// Full tile with borders (evaluation).
  RoadSample full_sample(int64_t index, const std::vector<int>& strides) const;

  /// Visiting order of tiles for an epoch; a seeded shuffle.
  std::vector<int64_t> epoch_order(int64_t epoch) const;

 private:
  DatasetSpec spec_;
  std::shared_ptr<const TileSource> source_;
};

/// Stateless 64-bit mixer used to derive independent streams from seeds.
uint64_t mix_seed(uint64_t a, uint64_t b);

// ---------------------------------------------------------------------------
// Image I/O
// ---------------------------------------------------------------------------

/// 8-bit RGB (or grey) PNG/TIFF to float [3, H, W] in [0, 1].
torch::Tensor read_image(const std::filesystem::path& path);
/// 8-bit mask; values >= 128 are road.
Mask read_mask(const std::filesystem::path& path);
/// Writes a float [3, H, W] tensor in [0, 1] as 8-bit RGB.
void write_image(const std::filesystem::path& path, const torch::Tensor& image);
/// Writes a mask as 0/255 single channel.
void write_mask(const std::filesystem::path& path, const Mask& mask);
/// Writes a [H, W] or [1, H, W] probability map as 8-bit grey.
void write_probability(const std::filesystem::path& path, const torch::Tensor& prob);
/// Source image with road in red and border in cyan, alpha-blended.
torch::Tensor render_overlay(const torch::Tensor& image, const Mask& road, const Mask* border);

// ---------------------------------------------------------------------------
// Synthetic roads
// ---------------------------------------------------------------------------

struct SynthOptions {
  int size = 128;
  uint64_t seed = 0;
  int min_road_width = 3;
  int max_road_width = 9;
  int min_roads = 1;
  int max_roads = 4;
};

/// Textured tiles with 1-4 smooth curved roads and road-coloured distractor
/// blobs. The mask is the exact rasterisation of the roads.
std::vector<RawTile> synth_tiles(int count, const SynthOptions& options);

}  // namespace hns
