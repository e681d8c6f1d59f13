#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hns/mask.hpp"

namespace hns {

inline constexpr int kMaxBoundaryThreshold = 5;

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct MetricReport {
  Confusion counts;
  double iou = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::map<int, double> boundary_f;  ///< threshold in px -> F

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

enum class Averaging { Micro, Macro };

/// Ratios from confusion counts. Both masks empty scores 1; one-sided empty scores 0.
MetricReport ratios_from_counts(const Confusion& counts);

MetricReport region_metrics(const Mask& pred, const Mask& gt);

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `sites` (exact, separable lower-envelope transform). Empty sites give +inf.
std::vector<double> squared_distance_transform(const Mask& sites);

/// Boundary F-score with matching tolerance `threshold_px` (Euclidean).
double boundary_f(const Mask& pred, const Mask& gt, double threshold_px);
/// Boundary F at thresholds 1..5 px, sharing the distance transforms.
std::map<int, double> boundary_f_profile(const Mask& pred, const Mask& gt);

/// Region metrics plus the boundary profile.
MetricReport evaluate_masks(const Mask& pred, const Mask& gt);

/// Micro: ratios from summed counts. Macro: mean of per-image ratios.
/// Boundary F is always the per-image mean.
MetricReport aggregate(const std::vector<MetricReport>& reports, Averaging mode = Averaging::Micro);

}  // namespace hns
