#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <torch/torch.h>

#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"

namespace hns {

namespace {

struct Point {
  double x, y;
};

Point point_on_side(int side, double size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> along(0.1 * size, 0.9 * size);
  const double t = along(rng);
  switch (side) {
    case 0: return {t, -2.0};
    case 1: return {size + 1.0, t};
    case 2: return {t, size + 1.0};
    default: return {-2.0, t};
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

RawTile synth_one(int index, const SynthOptions& opt) {
  const int n = opt.size;
  std::mt19937_64 rng(mix_seed(opt.seed, static_cast<uint64_t>(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<std::array<double, 3>> pixels(static_cast<size_t>(n) * n);

  // Vegetation/soil background with low-frequency texture.
  const std::array<double, 3> base{uniform(0.22, 0.42), uniform(0.32, 0.52), uniform(0.18, 0.32)};
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = {uniform(0.5, 4.0) * 2 * std::numbers::pi / n, uniform(0.5, 4.0) * 2 * std::numbers::pi / n,
         uniform(0.0, 2 * std::numbers::pi), uniform(0.02, 0.06)};
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double tex = 0.0;
      for (const auto& w : waves) tex += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      for (int c = 0; c < 3; ++c) pixels[static_cast<size_t>(y) * n + x][c] = base[c] + tex;
    }
  }

  // Distractors: compact blobs, some road-coloured (roofs, parking lots), some dark (trees).
  const int blobs = std::uniform_int_distribution<int>(2, 5)(rng);
  for (int b = 0; b < blobs; ++b) {
    const double cx = uniform(0, n), cy = uniform(0, n);
    const double rx = uniform(4, 14), ry = uniform(4, 14);
    const bool grey = unit(rng) < 0.5;
    const double level = grey ? uniform(0.45, 0.7) : uniform(0.08, 0.2);
    const std::array<double, 3> colour{level + uniform(-0.04, 0.04), level + uniform(-0.04, 0.04),
                                       level + uniform(-0.04, 0.04)};
    for (int y = std::max(0, int(cy - ry)); y < std::min(n, int(cy + ry) + 1); ++y) {
      for (int x = std::max(0, int(cx - rx)); x < std::min(n, int(cx + rx) + 1); ++x) {
        const double u = (x - cx) / rx, v = (y - cy) / ry;
        if (u * u + v * v <= 1.0) pixels[static_cast<size_t>(y) * n + x] = colour;
      }
    }
  }

  // Roads: quadratic Bezier curves entering and leaving through distinct sides.
  Mask mask(n, n);
  const int roads = std::uniform_int_distribution<int>(opt.min_roads, opt.max_roads)(rng);
  for (int k = 0; k < roads; ++k) {
    const int side_a = std::uniform_int_distribution<int>(0, 3)(rng);
    const int side_b = (side_a + std::uniform_int_distribution<int>(1, 3)(rng)) % 4;
    const Point p0 = point_on_side(side_a, n, rng), p2 = point_on_side(side_b, n, rng);
    const Point p1{uniform(0.2 * n, 0.8 * n), uniform(0.2 * n, 0.8 * n)};
    const int width = std::uniform_int_distribution<int>(opt.min_road_width, opt.max_road_width)(rng);
    const double half = width / 2.0;
    const double level = uniform(0.5, 0.78);
    const std::array<double, 3> colour{level, level + uniform(-0.03, 0.03), level + uniform(-0.05, 0.02)};

    constexpr int kSegments = 64;
    std::vector<Point> curve(kSegments + 1);
    for (int s = 0; s <= kSegments; ++s) {
      const double t = static_cast<double>(s) / kSegments, u = 1.0 - t;
      curve[s] = {u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x,
                  u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y};
    }
    for (int s = 0; s < kSegments; ++s) {
      const Point a = curve[s], b = curve[s + 1];
      const int x0 = std::max(0, int(std::floor(std::min(a.x, b.x) - half)));
      const int x1 = std::min(n - 1, int(std::ceil(std::max(a.x, b.x) + half)));
      const int y0 = std::max(0, int(std::floor(std::min(a.y, b.y) - half)));
      const int y1 = std::min(n - 1, int(std::ceil(std::max(a.y, b.y) + half)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (segment_distance({double(x), double(y)}, a, b) <= half) {
            mask(y, x) = 1;
            pixels[static_cast<size_t>(y) * n + x] = colour;
          }
        }
      }
    }
  }

  auto image = torch::empty({3, n, n}, torch::kFloat32);
  auto acc = image.accessor<float, 3>();
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = pixels[static_cast<size_t>(y) * n + x][c] + 0.03 * noise(rng);
        acc[c][y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  char name[32];
  std::snprintf(name, sizeof(name), "synth_%05d", index);
  return {image, std::move(mask), name};
}

}  // namespace

std::vector<RawTile> synth_tiles(int count, const SynthOptions& options) {
  if (count < 0) throw ValidationError("tile count must be non-negative");
  if (options.size < 64) throw ValidationError("synthetic tile size must be >= 64");
  if (options.min_road_width < 1 || options.max_road_width < options.min_road_width) {
    throw ValidationError("invalid road width range");
  }
  if (options.min_roads < 1 || options.max_roads < options.min_roads) {
    throw ValidationError("invalid road count range");
  }
  std::vector<RawTile> tiles;
  tiles.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) tiles.push_back(synth_one(i, options));
  return tiles;
}

}  // namespace hns
