#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"
#include "hns/losses.hpp"
#include "hns/metrics.hpp"
#include "hns/model.hpp"

using hns::Mask;
using testing_support::gradcheck_error;

namespace {

torch::Tensor f64(const torch::Tensor& t) { return t.to(torch::kFloat64); }

torch::Tensor scalar(double v) { return torch::full({1}, v, torch::kFloat64); }

// Values kept clear of the N+ thresholds so the loss is smooth at the sample.
torch::Tensor border_like(int64_t h, int64_t w) {
  auto u = torch::rand({h, w}, torch::kFloat64);
  return torch::where(u > 0.5, 0.6 + 0.35 * u, 0.05 + 0.35 * u);
}

Mask square(int64_t side, int64_t top, int64_t left, int64_t extent) {
  Mask m(side, side);
  for (int64_t r = top; r < top + extent; ++r)
    for (int64_t c = left; c < left + extent; ++c) m(r, c) = 1;
  return m;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("perfect prediction costs at most the clamp") {
  auto t = (torch::rand({4, 4}) > 0.5).to(torch::kFloat64);
  CHECK(hns::balanced_bce(t, t, 0.7, 0.3).item<double>() <= -std::log(1.0 - hns::kProbabilityEpsilon) + 1e-15);
}

TEST_CASE("half prediction with equal weights") {
  auto t = (torch::rand({5, 5}) > 0.5).to(torch::kFloat64);
  CHECK(hns::balanced_bce(torch::full({5, 5}, 0.5, torch::kFloat64), t, 0.5, 0.5).item<double>() ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("balanced bce matches the per-pixel summation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = torch::rand({4, 4}, torch::kFloat64);
    p[0][0] = 0.0;
    p[1][1] = 1.0;
    auto t = (torch::rand({4, 4}) > 0.5).to(torch::kFloat64);
    const double wp = u(rng), wn = 1.0 - wp;
    const double expect = oracle::balanced_bce(oracle::from_tensor(p), oracle::from_tensor(t), wp, wn,
                                               hns::kProbabilityEpsilon);
    CHECK(std::abs(hns::balanced_bce(p, t, wp, wn).item<double>() - expect) <= 1e-9);
  }
}

TEST_CASE("moving toward the target never increases the loss") {
  for (int trial = 0; trial < 30; ++trial) {
    auto p = torch::rand({6, 6}, torch::kFloat64);
    auto t = (torch::rand({6, 6}) > 0.5).to(torch::kFloat64);
    double prev = std::numeric_limits<double>::infinity();
    for (double a = 0.0; a <= 1.0; a += 0.1) {
      const double l = hns::balanced_bce((1.0 - a) * p + a * t, t, 0.8, 0.2).item<double>();
      REQUIRE(l <= prev + 1e-12);
      prev = l;
    }
  }
}

TEST_CASE("NaN prediction trips the divergence error") {
  auto p = torch::full({2, 2}, 0.5);
  p[0][1] = std::nan("");
  CHECK_THROWS_AS(hns::balanced_bce(p, torch::zeros({2, 2}), 0.5, 0.5), hns::DivergenceError);
  CHECK_THROWS_AS(hns::balanced_bce(torch::zeros({2, 2}), torch::zeros({2, 3}), 0.5, 0.5), hns::ValidationError);
}

TEST_CASE("consistency with no border evidence is zero") {
  CHECK(hns::border_consistency(torch::full({6, 6}, 0.3), torch::zeros({6, 6})).item<double>() == 0.0);
}

TEST_CASE("consistency on a flat road map is the mean of confident border pixels") {
  auto b = torch::zeros({6, 6}, torch::kFloat64);
  b[1][1] = 1.0;
  b[2][4] = 1.0;
  b[5][0] = 1.0;
  CHECK(hns::border_consistency(torch::full({6, 6}, 0.7, torch::kFloat64), b).item<double>() == 1.0);
}

TEST_CASE("vertical unit step matches the scalar-loop oracle") {
  auto y = torch::zeros({6, 6}, torch::kFloat64);
  y.slice(1, 3, 6).fill_(1.0);
  auto b = torch::zeros({6, 6}, torch::kFloat64);
  b.slice(1, 2, 4).fill_(0.5);
  const double expect = oracle::consistency(oracle::from_tensor(y), oracle::from_tensor(b));
  CHECK(hns::border_consistency(y, b).item<double>() == doctest::Approx(expect).epsilon(1e-12));
  // columns 2 and 3 carry |grad| = 1, so each contributes |1/sqrt2 - 0.5|.
  CHECK(expect == doctest::Approx(1.0 / std::sqrt(2.0) - 0.5));
}

TEST_CASE("consistency matches the oracle on random maps") {
  for (int trial = 0; trial < 20; ++trial) {
    auto y = torch::rand({5, 6}, torch::kFloat64), b = border_like(5, 6);
    const double expect = oracle::consistency(oracle::from_tensor(y), oracle::from_tensor(b));
    CHECK(std::abs(hns::border_consistency(y, b).item<double>() - expect) <= 1e-12);
  }
}

TEST_CASE("gradient magnitude is safe at flat regions") {
  auto y = torch::full({4, 4}, 0.5, torch::kFloat64).requires_grad_(true);
  auto b = torch::full({4, 4}, 0.8, torch::kFloat64).requires_grad_(true);
  hns::border_consistency(y, b).backward();
  CHECK(torch::isfinite(y.grad()).all().item<bool>());
  CHECK(torch::isfinite(b.grad()).all().item<bool>());
}

TEST_CASE("road edges are pooled like the border pyramid") {
  auto y = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
  y.select(3, 5).fill_(1.0);
  auto edges = hns::road_edges_at_stride(y, 4);
  CHECK(edges.sizes() == torch::IntArrayRef({1, 1, 2, 2}));
  CHECK(edges[0][0][0][1].item<double>() == 1.0);
  CHECK(edges[0][0][0][0].item<double>() == 0.0);
  CHECK(torch::equal(hns::road_edges_at_stride(y, 1), hns::gradient_magnitude(y)));
}

TEST_CASE("bce and consistency match finite differences") {
  torch::manual_seed(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = (torch::rand({1, 1, 4, 4}) > 0.5).to(torch::kFloat64);
    auto p = 0.05 + 0.9 * torch::rand({1, 1, 4, 4}, torch::kFloat64);
    auto bce = gradcheck_error(
        [&](const auto& in) { return hns::balanced_bce(in[0], t, scalar(0.7), scalar(0.3)); }, {p});
    CHECK(bce <= 1e-4);
    auto y = torch::rand({6, 6}, torch::kFloat64), b = border_like(6, 6);
    auto cons = gradcheck_error([](const auto& in) { return hns::border_consistency(in[0], in[1]); }, {y, b});
    CHECK(cons <= 1e-4);
  }
}

TEST_CASE("total loss recomposes its parts") {
  hns::PredictionBundle bundle;
  bundle.road_prob = torch::rand({2, 1, 32, 32});
  bundle.border_strides = {8, 16};
  bundle.border_levels = {2, 3};
  bundle.border_probs = {torch::rand({2, 1, 4, 4}), torch::rand({2, 1, 2, 2})};
  auto s1 = hns::make_sample(torch::zeros({3, 32, 32}), square(32, 4, 4, 12), {8, 16});
  auto s2 = hns::make_sample(torch::zeros({3, 32, 32}), square(32, 10, 2, 9), {8, 16});
  auto batch = hns::collate({s1, s2});
  auto report = hns::total_loss(bundle, batch, 0.7);
  auto v = report.values();
  double expect = v.road;
  for (double b : v.border) expect += b;
  expect += 0.7 * (v.consistency[0] + v.consistency[1]);
  CHECK(v.total == expect);
  CHECK(report.total.item<double>() == doctest::Approx(expect).epsilon(1e-6));
  CHECK(v.road >= 0.0);
  for (double c : v.consistency) CHECK(c >= 0.0);

  auto zero = hns::total_loss(bundle, batch, 0.0).values();
  CHECK(zero.total == doctest::Approx(v.road + v.border[0] + v.border[1]).epsilon(1e-12));

  hns::PredictionBundle plain;
  plain.road_prob = bundle.road_prob;
  auto bu_batch = hns::collate({hns::make_sample(torch::zeros({3, 32, 32}), square(32, 4, 4, 12), {})});
  plain.road_prob = bundle.road_prob.slice(0, 0, 1);
  auto only_road = hns::total_loss(plain, bu_batch, 1.0);
  CHECK(only_road.total.item<double>() == only_road.road.item<double>());

  bundle.border_strides = {8, 32};
  CHECK_THROWS_AS(hns::total_loss(bundle, batch, 1.0), hns::ValidationError);
}

TEST_CASE("total loss gradient matches finite differences") {
  torch::manual_seed(4);
  auto s = hns::make_sample(torch::zeros({3, 8, 8}), square(8, 2, 1, 4), {4});
  auto batch = hns::collate({s}).to(torch::kFloat64);
  auto f = [&](const std::vector<torch::Tensor>& in) {
    hns::PredictionBundle bundle;
    bundle.road_prob = in[0];
    bundle.border_strides = {4};
    bundle.border_levels = {2};
    bundle.border_probs = {in[1]};
    return hns::total_loss(bundle, batch, 1.0).total;
  };
  // Distinct values per pooling window so the max-pool has no ties.
  auto y = 0.05 + 0.9 * torch::rand({1, 1, 8, 8}, torch::kFloat64);
  auto b = border_like(2, 2).reshape({1, 1, 2, 2});
  CHECK(gradcheck_error(f, {y, b}) <= 1e-4);
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

TEST_CASE("identical masks score one") {
  auto m = square(16, 3, 3, 6);
  auto r = hns::evaluate_masks(m, m);
  CHECK(r.iou == 1.0);
  CHECK(r.f1 == 1.0);
  for (int t = 1; t <= 5; ++t) CHECK(r.boundary_f.at(t) == 1.0);
}

TEST_CASE("ratios from forced counts") {
  auto r = hns::ratios_from_counts({5, 3, 2, 10});
  CHECK(r.iou == doctest::Approx(0.5));
  CHECK(r.precision == doctest::Approx(5.0 / 8.0));
  CHECK(r.recall == doctest::Approx(5.0 / 7.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("empty conventions") {
  auto both = hns::region_metrics(Mask(4, 4), Mask(4, 4));
  CHECK(both.iou == 1.0);
  CHECK(both.f1 == 1.0);
  auto one = hns::region_metrics(square(4, 0, 0, 2), Mask(4, 4));
  CHECK(one.iou == 0.0);
  CHECK(one.f1 == 0.0);
  CHECK(hns::boundary_f(Mask(4, 4), Mask(4, 4), 2) == 1.0);
  CHECK(hns::boundary_f(square(8, 1, 1, 3), Mask(8, 8), 2) == 0.0);
  CHECK_THROWS_AS(hns::region_metrics(Mask(4, 4), Mask(4, 5)), hns::ValidationError);
}

TEST_CASE("region metrics equal the pixel-loop oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = oracle::random_mask(32, 32, 0.3, rng), g = oracle::random_mask(32, 32, 0.3, rng);
    auto r = hns::region_metrics(p, g);
    auto k = oracle::count(p, g);
    REQUIRE(r.counts.tp == k.tp);
    REQUIRE(r.counts.fp == k.fp);
    REQUIRE(r.counts.fn == k.fn);
    REQUIRE(r.counts.tn == k.tn);
    CHECK(std::abs(r.iou - double(k.tp) / double(k.tp + k.fp + k.fn)) <= 1e-12);
    auto swapped = hns::region_metrics(g, p);
    CHECK(swapped.iou == r.iou);
    CHECK(swapped.counts.fp == r.counts.fn);
    CHECK(r.iou <= r.f1 + 1e-15);
  }
}

TEST_CASE("shifted square matches at one pixel") {
  auto gt = square(12, 3, 3, 5), pred = square(12, 3, 4, 5);
  for (int t = 1; t <= 5; ++t) CHECK(hns::boundary_f(pred, gt, t) == 1.0);
  CHECK(hns::boundary_f(pred, gt, 0) < 1.0);
}

TEST_CASE("far boundaries score zero") {
  auto gt = square(32, 1, 1, 5), pred = square(32, 20, 20, 5);
  for (int t = 1; t <= 5; ++t) CHECK(hns::boundary_f(pred, gt, t) == 0.0);
}

TEST_CASE("boundary F equals exhaustive matching and is monotone") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 60; ++trial) {
    auto p = oracle::random_mask(20, 20, 0.35, rng), g = oracle::random_mask(20, 20, 0.35, rng);
    auto profile = hns::boundary_f_profile(p, g);
    double prev = -1.0;
    for (int t = 1; t <= 5; ++t) {
      CHECK(std::abs(profile.at(t) - oracle::boundary_f(p, g, t)) <= 1e-12);
      CHECK(profile.at(t) >= prev);
      prev = profile.at(t);
    }
  }
}

TEST_CASE("distance transform is exact") {
  Mask sites(5, 7);
  sites(1, 2) = 1;
  sites(4, 6) = 1;
  auto d = hns::squared_distance_transform(sites);
  for (int64_t r = 0; r < 5; ++r)
    for (int64_t c = 0; c < 7; ++c) {
      const double a = double((r - 1) * (r - 1) + (c - 2) * (c - 2));
      const double b = double((r - 4) * (r - 4) + (c - 6) * (c - 6));
      CHECK(d[r * 7 + c] == std::min(a, b));
    }
  CHECK(std::isinf(hns::squared_distance_transform(Mask(3, 3))[4]));
}

TEST_CASE("aggregate") {
  auto a = hns::ratios_from_counts({1, 1, 0, 2});
  auto b = hns::ratios_from_counts({1, 0, 1, 2});
  a.boundary_f = {{1, 0.2}, {2, 0.4}};
  b.boundary_f = {{1, 0.6}, {2, 0.8}};
  auto micro = hns::aggregate({a, b});
  CHECK(micro.iou == doctest::Approx(0.5));
  CHECK(micro.boundary_f.at(1) == doctest::Approx(0.4));
  auto macro = hns::aggregate({a, b}, hns::Averaging::Macro);
  CHECK(macro.iou == doctest::Approx(0.5));
  auto single = hns::aggregate({a});
  CHECK(single.iou == a.iou);
  CHECK(single.f1 == a.f1);
  auto twice = hns::aggregate({a, a});
  CHECK(twice.iou == a.iou);
  CHECK(twice.precision == a.precision);
  CHECK_THROWS_AS(hns::aggregate({}), hns::ValidationError);
}

TEST_CASE("report json round-trip") {
  auto r = hns::evaluate_masks(square(16, 2, 2, 7), square(16, 3, 2, 7));
  auto j = r.to_json();
  for (const char* k : {"iou", "precision", "recall", "f1", "boundary_f", "counts"}) CHECK(j.contains(k));
  CHECK(j["boundary_f"].contains("3"));
  auto back = hns::MetricReport::from_json(j);
  CHECK(back.counts == r.counts);
  CHECK(back.boundary_f == r.boundary_f);
  CHECK(back.f1 == r.f1);
}

}  // TEST_SUITE
