#include "hns/losses.hpp"

#include <cmath>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace F = torch::nn::functional;

namespace {

void check_finite(const torch::Tensor& t, const char* what) {
  if (torch::isnan(t).any().item<bool>()) throw DivergenceError(std::string("NaN in ") + what);
}

}  // namespace

torch::Tensor balanced_bce(const torch::Tensor& pred, const torch::Tensor& target,
                           const torch::Tensor& pos_weight, const torch::Tensor& neg_weight) {
  if (pred.sizes() != target.sizes()) throw ValidationError("prediction and target shapes differ");
  if (pred.dim() < 1 || pred.numel() == 0) throw ValidationError("empty prediction");
  const int64_t batch = pred.size(0);
  if (pos_weight.numel() != batch || neg_weight.numel() != batch) {
    throw ValidationError("balance weights must have one entry per sample");
  }
  check_finite(pred, "prediction");
  auto p = pred.clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  std::vector<int64_t> shape(static_cast<size_t>(pred.dim()), 1);
  shape[0] = batch;
  auto wp = pos_weight.to(pred.dtype()).reshape(shape);
  auto wn = neg_weight.to(pred.dtype()).reshape(shape);
  auto per_pixel = -(wp * target * torch::log(p) + wn * (1.0 - target) * torch::log(1.0 - p));
  return per_pixel.mean();
}

torch::Tensor balanced_bce(const torch::Tensor& pred, const torch::Tensor& target, double pos_weight,
                           double neg_weight) {
  auto opts = torch::TensorOptions().dtype(pred.dtype());
  return balanced_bce(pred.unsqueeze(0), target.unsqueeze(0), torch::full({1}, pos_weight, opts),
                      torch::full({1}, neg_weight, opts));
}

torch::Tensor gradient_magnitude(const torch::Tensor& map) {
  if (map.dim() < 2) throw ValidationError("gradient needs at least two dims");
  const int64_t h = map.size(-2), w = map.size(-1);
  auto rows = [&](int64_t lo, int64_t hi) { return map.narrow(-2, lo, hi - lo); };
  auto cols = [&](int64_t lo, int64_t hi) { return map.narrow(-1, lo, hi - lo); };
  // Replicate padding: index clamp on both sides.
  auto down = torch::cat({rows(1, h), rows(h - 1, h)}, -2);
  auto up = torch::cat({rows(0, 1), rows(0, h - 1)}, -2);
  auto right = torch::cat({cols(1, w), cols(w - 1, w)}, -1);
  auto left = torch::cat({cols(0, 1), cols(0, w - 1)}, -1);
  auto gy = down - up;
  auto gx = right - left;
  auto sq = gx * gx + gy * gy;
  auto positive = sq > 0;
  // sqrt has an infinite slope at 0; route zeros through a safe branch.
  return torch::where(positive, torch::sqrt(torch::where(positive, sq, torch::ones_like(sq))),
                      torch::zeros_like(sq));
}

torch::Tensor border_consistency(const torch::Tensor& road_prob, const torch::Tensor& border_prob) {
  if (road_prob.sizes() != border_prob.sizes()) {
    throw ValidationError("road and border maps differ in shape at this level");
  }
  return consistency_from_magnitude(gradient_magnitude(road_prob), border_prob);
}

torch::Tensor consistency_from_magnitude(const torch::Tensor& magnitude_map, const torch::Tensor& border_prob) {
  if (magnitude_map.sizes() != border_prob.sizes()) {
    throw ValidationError("road and border maps differ in shape at this level");
  }
  auto magnitude = magnitude_map.dim() == 2 ? magnitude_map.unsqueeze(0).unsqueeze(0) : magnitude_map;
  auto b = border_prob.dim() == 2 ? border_prob.unsqueeze(0).unsqueeze(0) : border_prob;
  if (b.dim() != 4) throw ValidationError("border consistency expects [B, 1, h, w] or [h, w]");
  auto support = ((b.detach() >= 0.5) | (magnitude.detach() > 0)).to(b.dtype());
  auto residual = torch::abs(magnitude / std::sqrt(2.0) - b) * support;
  auto sums = residual.flatten(1).sum(1);
  auto counts = support.flatten(1).sum(1);
  auto per_sample = torch::where(counts > 0, sums / counts.clamp_min(1.0), torch::zeros_like(sums));
  return per_sample.mean();
}

torch::Tensor road_edges_at_stride(const torch::Tensor& road_prob, int stride) {
  auto magnitude = gradient_magnitude(road_prob);
  if (stride == 1) return magnitude;
  return F::max_pool2d(magnitude, F::MaxPool2dFuncOptions(stride).stride(stride));
}

void LossValues::recompute_total() {
  double sum = road;
  for (double b : border) sum += b;
  double cons = 0.0;
  for (double c : consistency) cons += c;
  total = sum + lambda * cons;
}

LossValues LossReport::values() const {
  LossValues v;
  v.lambda = lambda;
  v.road = road.item<double>();
  for (const auto& b : border) v.border.push_back(b.item<double>());
  for (const auto& c : consistency) v.consistency.push_back(c.item<double>());
  v.recompute_total();
  return v;
}

LossReport total_loss(const PredictionBundle& bundle, const Batch& batch, double lambda) {
  if (bundle.border_strides != batch.strides) {
    throw ValidationError("prediction border levels do not match the sample border pyramid");
  }
  LossReport report;
  report.lambda = lambda;
  report.road = balanced_bce(bundle.road_prob, batch.road, batch.road_pos_weight, batch.road_neg_weight);
  auto total = report.road;
  torch::Tensor consistency_sum;
  for (size_t i = 0; i < bundle.border_probs.size(); ++i) {
    auto border_term = balanced_bce(bundle.border_probs[i], batch.borders[i], batch.border_pos_weight[i],
                                    batch.border_neg_weight[i]);
    auto edges = road_edges_at_stride(bundle.road_prob, bundle.border_strides[i]);
    auto consistency_term = consistency_from_magnitude(edges, bundle.border_probs[i]);
    report.border.push_back(border_term);
    report.consistency.push_back(consistency_term);
    total = total + border_term;
    consistency_sum = consistency_sum.defined() ? consistency_sum + consistency_term : consistency_term;
  }
  if (consistency_sum.defined()) total = total + lambda * consistency_sum;
  report.total = total;
  return report;
}

}  // namespace hns
