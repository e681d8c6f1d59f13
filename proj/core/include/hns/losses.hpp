#pragma once

#include <vector>

#include <torch/types.h>

#include "hns/data_pipeline.hpp"
#include "hns/model.hpp"

namespace hns {

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Class-balanced BCE averaged over pixels:
///   -[w_pos * t * log p + w_neg * (1 - t) * log(1 - p)],  p clamped to [eps, 1 - eps].
/// `pred` and `target` are [B, 1, H, W] (or any equal shape with leading batch dim);
/// weights are per-sample [B] tensors. Throws DivergenceError on NaN predictions.
torch::Tensor balanced_bce(const torch::Tensor& pred, const torch::Tensor& target,
                           const torch::Tensor& pos_weight, const torch::Tensor& neg_weight);
/// Single map of any shape with scalar weights.
torch::Tensor balanced_bce(const torch::Tensor& pred, const torch::Tensor& target, double pos_weight,
                           double neg_weight);

/// Magnitude of the central difference (y[p+1] - y[p-1] along each axis, edge
/// replicated) over the last two dims. Exactly zero where both differences are.
torch::Tensor gradient_magnitude(const torch::Tensor& map);

/// Border consistency at one level. For each sample:
///   (1/|N+|) sum_{p in N+} | ||grad y(p)|| / sqrt(2) - b(p) |,
/// with N+ = {b >= 0.5} union {||grad y|| > 0}; 0 when N+ is empty. Averaged
/// over the batch. Inputs are [B, 1, h, w] or [h, w].
torch::Tensor border_consistency(const torch::Tensor& road_prob, const torch::Tensor& border_prob);

/// Same loss with ||grad y|| supplied directly (already at the level's resolution).
torch::Tensor consistency_from_magnitude(const torch::Tensor& magnitude, const torch::Tensor& border_prob);

/// ||grad y|| of the full-resolution road map, max-pooled over stride x stride
/// cells, the same reduction that builds the border target pyramid.
torch::Tensor road_edges_at_stride(const torch::Tensor& road_prob, int stride);

struct LossValues {
  double road = 0.0;
  std::vector<double> border;
  std::vector<double> consistency;
  double lambda = 1.0;
  double total = 0.0;  ///< road + sum(border) + lambda * sum(consistency), summed in that order
  void recompute_total();
};

struct LossReport {
  torch::Tensor road;
  std::vector<torch::Tensor> border;
  std::vector<torch::Tensor> consistency;
  torch::Tensor total;
  LossValues values() const;
  double lambda = 1.0;
};

/// Joint objective over the road map and every border level in the bundle.
LossReport total_loss(const PredictionBundle& bundle, const Batch& batch, double lambda);

}  // namespace hns
