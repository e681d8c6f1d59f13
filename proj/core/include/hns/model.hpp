#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/nn.h>

#include "hns/attention_fusion.hpp"
#include "hns/border_head.hpp"
#include "hns/encoder.hpp"
#include "hns/structure_gnn.hpp"

namespace hns {

/// Ablation presets, from attention-only fusion to the full network.
enum class Variant { BU, SG, E1, E2, Full };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);
std::string to_string(NormKind n);
NormKind parse_norm(std::string_view text);

/// Stride of encoder level 1..4.
constexpr int level_stride(int level) { return 1 << (level + 1); }

struct ModelConfig {
  Variant variant = Variant::Full;
  std::array<int64_t, 4> widths{64, 128, 256, 512};
  int64_t width_divisor = 1;
  std::vector<int> gnn_levels{2, 3, 4};
  bool enable_border_heads = true;
  bool enable_upper_stream = true;
  bool enable_lower_stream = true;
  int64_t attention_dim = 64;    ///< d
  int64_t latent_nodes = 64;     ///< D1
  int64_t latent_dim = 64;       ///< D2
  int64_t border_channels = 64;  ///< C_b
  double consistency_weight = 1.0;  ///< lambda
  NormKind norm = NormKind::Batch;

  /// Default-width config for a variant.
  static ModelConfig preset(Variant v);
  /// Overwrites the variant-controlled fields (levels, heads, streams).
  ModelConfig& apply_variant(Variant v);
  /// Throws ConfigError naming the first conflicting field.
  void validate() const;

  /// Widths after the divisor, never below 1.
  int64_t width(int level) const;
  int64_t scaled(int64_t value) const;
  std::array<int64_t, 4> effective_widths() const;
  bool has_gnn(int level) const;
  /// Strides of levels carrying border supervision, ascending.
  std::vector<int> border_strides() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-tile outputs. Border maps are listed in ascending stride order.
struct PredictionBundle {
  torch::Tensor road_prob;    ///< [B, 1, H, W]
  torch::Tensor road_logits;  ///< [B, 1, H, W]
  std::vector<int> border_levels;
  std::vector<int> border_strides;
  std::vector<torch::Tensor> border_probs;  ///< [B, 1, H/s, W/s]
};

/// Decoder step: upsample the coarser map, gate it with the skip feature via
/// element-wise attention, refine with a 3x3 conv and add the skip.
class DecoderMergeImpl : public torch::nn::Module {
 public:
  DecoderMergeImpl(int64_t coarse_channels, int64_t skip_channels, NormKind norm);
  torch::Tensor forward(const torch::Tensor& coarse, const torch::Tensor& skip);

 private:
  ElementAttention attention_{nullptr};
  torch::nn::Conv2d refine_{nullptr};
  Norm2d norm_{nullptr};
};
TORCH_MODULE(DecoderMerge);

class HnsNetImpl : public torch::nn::Module {
 public:
  explicit HnsNetImpl(ModelConfig config);

  /// `image` is [B, 3, H, W] or [3, H, W] with H, W multiples of 32.
  PredictionBundle forward(torch::Tensor image);

  const ModelConfig& config() const { return config_; }
  int border_head_count() const;
  int gnn_count() const;
  int64_t parameter_count() const;

  Encoder encoder{nullptr};
  /// Indexed by level 1..4 (entry 0 unused where absent).
  std::array<ElementAttention, 5> level_fusion{{nullptr, nullptr, nullptr, nullptr, nullptr}};
  std::array<BorderHead, 5> border_heads{{nullptr, nullptr, nullptr, nullptr, nullptr}};
  std::array<StructureGnn, 5> gnns{{nullptr, nullptr, nullptr, nullptr, nullptr}};
  std::array<ElementAttention, 5> gnn_fusion{{nullptr, nullptr, nullptr, nullptr, nullptr}};
  std::array<DecoderMerge, 5> decoder{{nullptr, nullptr, nullptr, nullptr, nullptr}};
  torch::nn::Conv2d classifier{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(HnsNet);

/// Builds and initialises a model; parameters are a pure function of (config, seed).
HnsNet build_model(const ModelConfig& config, uint64_t seed);

/// FNV-1a over every parameter and buffer, visited in name order.
uint64_t parameter_checksum(const torch::nn::Module& module);

}  // namespace hns
