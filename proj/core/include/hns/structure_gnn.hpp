#pragma once

#include <cstdint>

#include <torch/nn.h>

namespace hns {

/// [B, C, H, W] -> [B, N, C] with N = H * W (row-major nodes).
torch::Tensor to_nodes(const torch::Tensor& feature_map);
/// [B, N, C] -> [B, C, H, W]; N must equal H * W.
torch::Tensor from_nodes(const torch::Tensor& nodes, int64_t height, int64_t width);

/// Point-wise sum of the two streams, unflattened to [B, C_v, H, W].
torch::Tensor fuse_streams(const torch::Tensor& upper, const torch::Tensor& lower, int64_t height,
                           int64_t width);

struct StructureGnnOptions {
  int64_t border_channels = 64;   ///< C_b
  int64_t road_channels = 64;     ///< C_r
  int64_t out_channels = 64;      ///< C_v
  int64_t attention_dim = 64;     ///< d
  int64_t latent_nodes = 64;      ///< D1
  int64_t latent_dim = 64;        ///< D2
  bool upper_stream = true;
  bool lower_stream = true;
  double adjacency_init_std = 0.01;
};

/// Intermediate tensors of the latent-graph stream.
struct LatentTrace {
  torch::Tensor projected;  ///< X_f, [B, D1, D2]
  torch::Tensor smoothed;   ///< X_l, [B, D1, D2]
  torch::Tensor output;     ///< [B, N, C_v]
};

/// Road-structure-aware GNN over node sets of border features X_b and road
/// features X_r.
///
/// The upper stream is co-attention: similarities come from border space,
/// values from road space,
///   softmax(rho(X_b) kappa(X_b)^T / sqrt(d)) upsilon(X_r).
///
/// The lower stream projects border dimensions into road space,
///   X_f = phi(X_b)^T psi(X_r) / N             (D1 x D2),
/// smooths over a learned latent graph,
///   X_l = (I - A) X_f W_r,
/// then maps back to the nodes with a separate reprojection of X_r (N x D1)
/// followed by a channel transform D2 -> C_v.
///
/// All node-set inputs are [B, N, C] or unbatched [N, C].
class StructureGnnImpl : public torch::nn::Module {
 public:
  explicit StructureGnnImpl(const StructureGnnOptions& options);

  /// Row-stochastic attention matrix [B, N, N].
  torch::Tensor attention(const torch::Tensor& border_nodes);
  torch::Tensor co_attention(const torch::Tensor& border_nodes, const torch::Tensor& road_nodes);
  LatentTrace latent_graph_trace(const torch::Tensor& border_nodes, const torch::Tensor& road_nodes);
  torch::Tensor latent_graph_reason(const torch::Tensor& border_nodes, const torch::Tensor& road_nodes);
  /// X_l from X_f.
  torch::Tensor graph_convolution(const torch::Tensor& projected);

  /// Maps [B, C_b, H, W] and [B, C_r, H, W] to [B, C_v, H, W].
  torch::Tensor forward(const torch::Tensor& border_map, const torch::Tensor& road_map);

  const StructureGnnOptions& options() const { return options_; }

  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr};
  torch::nn::Linear border_proj{nullptr}, road_proj{nullptr}, reprojection{nullptr};
  torch::nn::Linear output_transform{nullptr};
  torch::Tensor adjacency;     ///< A_G, [D1, D1]
  torch::Tensor graph_weight;  ///< W_r, [D2, D2]

 private:
  StructureGnnOptions options_;
};
TORCH_MODULE(StructureGnn);

}  // namespace hns
