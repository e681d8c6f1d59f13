#include "hns/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"

namespace hns {

namespace {

void check_shapes(const Mask& pred, const Mask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ValidationError("prediction and ground truth differ in shape");
  }
}

double f_measure(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

// 1-D squared distance transform (lower envelope of parabolas rooted at the
// finite samples of f).
void edt_1d(const double* f, double* d, int64_t n, int64_t* v, double* z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto intersect = [&](int64_t q, int64_t p) {
    return ((f[q] + double(q * q)) - (f[p] + double(p * p))) / (2.0 * double(q - p));
  };
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    for (int64_t q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  int64_t j = 0;
  for (int64_t q = 0; q < n; ++q) {
    while (z[j + 1] < double(q)) ++j;
    const double dq = double(q - v[j]);
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

MetricReport ratios_from_counts(const Confusion& c) {
  MetricReport r;
  r.counts = c;
  const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn);
  r.iou = c.tp + c.fp + c.fn > 0 ? tp / (tp + fp + fn) : 1.0;
  r.precision = c.tp + c.fp > 0 ? tp / (tp + fp) : (c.fn == 0 ? 1.0 : 0.0);
  r.recall = c.tp + c.fn > 0 ? tp / (tp + fn) : (c.fp == 0 ? 1.0 : 0.0);
  r.f1 = f_measure(r.precision, r.recall);
  return r;
}

MetricReport region_metrics(const Mask& pred, const Mask& gt) {
  check_shapes(pred, gt);
  pred.validate_binary();
  gt.validate_binary();
  Confusion c;
  const auto p = pred.data();
  const auto g = gt.data();
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i]) {
      g[i] ? ++c.tp : ++c.fp;
    } else {
      g[i] ? ++c.fn : ++c.tn;
    }
  }
  return ratios_from_counts(c);
}

std::vector<double> squared_distance_transform(const Mask& sites) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int64_t h = sites.height(), w = sites.width();
  std::vector<double> grid(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) grid[i] = sites.data()[i] ? 0.0 : inf;
  const int64_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int64_t> v(n);
  for (int64_t c = 0; c < w; ++c) {
    for (int64_t r = 0; r < h; ++r) f[r] = grid[r * w + c];
    edt_1d(f.data(), d.data(), h, v.data(), z.data());
    for (int64_t r = 0; r < h; ++r) grid[r * w + c] = d[r];
  }
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) f[c] = grid[r * w + c];
    edt_1d(f.data(), d.data(), w, v.data(), z.data());
    for (int64_t c = 0; c < w; ++c) grid[r * w + c] = d[c];
  }
  return grid;
}

namespace {

struct BoundaryMatch {
  Mask pred_boundary, gt_boundary;
  std::vector<double> to_gt, to_pred;
};

BoundaryMatch match_boundaries(const Mask& pred, const Mask& gt) {
  check_shapes(pred, gt);
  BoundaryMatch m{extract_border(pred, 1), extract_border(gt, 1), {}, {}};
  m.to_gt = squared_distance_transform(m.gt_boundary);
  m.to_pred = squared_distance_transform(m.pred_boundary);
  return m;
}

double boundary_f_at(const BoundaryMatch& m, double threshold) {
  const int64_t pred_count = m.pred_boundary.count();
  const int64_t gt_count = m.gt_boundary.count();
  if (pred_count == 0 && gt_count == 0) return 1.0;
  if (pred_count == 0 || gt_count == 0) return 0.0;
  const double limit = threshold * threshold;
  int64_t pred_hits = 0, gt_hits = 0;
  const auto pb = m.pred_boundary.data();
  const auto gb = m.gt_boundary.data();
  for (size_t i = 0; i < pb.size(); ++i) {
    if (pb[i] && m.to_gt[i] <= limit) ++pred_hits;
    if (gb[i] && m.to_pred[i] <= limit) ++gt_hits;
  }
  return f_measure(double(pred_hits) / double(pred_count), double(gt_hits) / double(gt_count));
}

}  // namespace

double boundary_f(const Mask& pred, const Mask& gt, double threshold_px) {
  if (!(threshold_px >= 0.0)) throw ValidationError("boundary threshold must be non-negative");
  return boundary_f_at(match_boundaries(pred, gt), threshold_px);
}

std::map<int, double> boundary_f_profile(const Mask& pred, const Mask& gt) {
  const auto m = match_boundaries(pred, gt);
  std::map<int, double> out;
  for (int t = 1; t <= kMaxBoundaryThreshold; ++t) out[t] = boundary_f_at(m, t);
  return out;
}

MetricReport evaluate_masks(const Mask& pred, const Mask& gt) {
  auto report = region_metrics(pred, gt);
  report.boundary_f = boundary_f_profile(pred, gt);
  return report;
}

MetricReport aggregate(const std::vector<MetricReport>& reports, Averaging mode) {
  if (reports.empty()) throw ValidationError("cannot aggregate an empty report list");
  Confusion total;
  for (const auto& r : reports) total += r.counts;
  MetricReport out = ratios_from_counts(total);
  const double n = double(reports.size());
  if (mode == Averaging::Macro) {
    out.iou = out.precision = out.recall = out.f1 = 0.0;
    for (const auto& r : reports) {
      out.iou += r.iou / n;
      out.precision += r.precision / n;
      out.recall += r.recall / n;
      out.f1 += r.f1 / n;
    }
  }
  if (reports.size() == 1) {
    out.boundary_f = reports.front().boundary_f;
    return out;
  }
  std::map<int, double> sums;
  std::map<int, int> seen;
  for (const auto& r : reports) {
    for (const auto& [t, f] : r.boundary_f) {
      sums[t] += f;
      ++seen[t];
    }
  }
  for (const auto& [t, s] : sums) out.boundary_f[t] = s / seen[t];
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["iou"] = iou;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  nlohmann::json bf = nlohmann::json::object();
  for (const auto& [t, f] : boundary_f) bf[std::to_string(t)] = f;
  j["boundary_f"] = bf;
  j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.iou = j.at("iou").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  for (const auto& [k, v] : j.at("boundary_f").items()) r.boundary_f[std::stoi(k)] = v.get<double>();
  const auto& c = j.at("counts");
  r.counts = {c.at("tp").get<int64_t>(), c.at("fp").get<int64_t>(), c.at("fn").get<int64_t>(),
              c.at("tn").get<int64_t>()};
  return r;
}

}  // namespace hns
