#include <doctest.h>

#include <filesystem>
#include <random>

#include "../support/oracles.hpp"
#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"

using hns::Mask;

namespace {

Mask square(int64_t side, int64_t top, int64_t left, int64_t extent) {
  Mask m(side, side);
  for (int64_t r = top; r < top + extent; ++r)
    for (int64_t c = left; c < left + extent; ++c) m(r, c) = 1;
  return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hns_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("data_pipeline") {

TEST_CASE("border of an empty mask is empty") {
  CHECK_FALSE(hns::extract_border(Mask(8, 8), 1).any());
}

TEST_CASE("isolated pixel is its own border") {
  Mask m(4, 4);
  m(2, 2) = 1;
  CHECK(hns::extract_border(m, 1) == m);
}

TEST_CASE("filled square gives its perimeter ring") {
  auto m = square(9, 2, 2, 5);
  auto b = hns::extract_border(m, 1);
  CHECK(b.count() == 16);
  CHECK(b == oracle::border(m, 1));
  CHECK(b(2, 2) == 1);
  CHECK(b(4, 4) == 0);
}

TEST_CASE("tile edges are not borders") {
  CHECK_FALSE(hns::extract_border(Mask(6, 6, 1), 1).any());
}

TEST_CASE("border matches the brute-force operator for several radii") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = oracle::random_mask(16, 16, 0.2 + 0.015 * trial, rng);
    for (int r = 1; r <= 3; ++r) REQUIRE(hns::extract_border(m, r) == oracle::border(m, r));
  }
}

TEST_CASE("inner borders of mask and complement tile the morphological gradient") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = oracle::random_mask(16, 16, 0.5, rng);
    auto inner = hns::extract_border(m, 1);
    auto outer = hns::extract_border(m.inverted(), 1);
    auto gradient = oracle::dilate_ne_erode(m, 1);
    for (int64_t r = 0; r < 16; ++r)
      for (int64_t c = 0; c < 16; ++c) REQUIRE((inner(r, c) || outer(r, c)) == gradient(r, c));
  }
}

TEST_CASE("non-binary masks and bad radius are rejected") {
  Mask m(3, 3);
  m(1, 1) = 2;
  CHECK_THROWS_AS(hns::extract_border(m, 1), hns::ValidationError);
  CHECK_THROWS_AS(hns::extract_border(Mask(3, 3), 0), hns::ValidationError);
}

TEST_CASE("border pyramid") {
  SUBCASE("empty stays empty") {
    for (const auto& level : hns::border_pyramid(Mask(8, 8), {2, 4})) CHECK_FALSE(level.any());
  }
  SUBCASE("corner pixel lands in the first cell") {
    Mask m(8, 8);
    m(0, 0) = 1;
    auto level = hns::border_pyramid(m, {2})[0];
    CHECK(level.height() == 4);
    CHECK(level(0, 0) == 1);
    CHECK(level.count() == 1);
  }
  SUBCASE("thin horizontal line survives a stride of four") {
    Mask m(8, 8);
    for (int64_t c = 0; c < 8; ++c) m(3, c) = 1;
    auto level = hns::border_pyramid(m, {4})[0];
    CHECK(level(0, 0) == 1);
    CHECK(level(0, 1) == 1);
    CHECK(level(1, 0) == 0);
    CHECK(level(1, 1) == 0);
  }
  SUBCASE("matches window enumeration on random masks") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      auto m = oracle::random_mask(16, 16, 0.02 * trial, rng);
      auto levels = hns::border_pyramid(m, {1, 2, 4, 8});
      CHECK(levels[0] == m);
      CHECK(levels[1] == oracle::max_pool(m, 2));
      CHECK(levels[2] == oracle::max_pool(m, 4));
      CHECK(levels[3] == oracle::max_pool(m, 8));
    }
  }
  SUBCASE("stride must divide the mask") {
    CHECK_THROWS_AS(hns::border_pyramid(Mask(10, 10), {4}), hns::ValidationError);
  }
}

TEST_CASE("balance weights") {
  Mask m(4, 4);
  m(0, 0) = m(1, 1) = m(2, 2) = 1;
  auto w = hns::balance_weights(m);
  CHECK(w.pos == doctest::Approx(13.0 / 16.0));
  CHECK(w.neg == doctest::Approx(3.0 / 16.0));
  auto full = hns::balance_weights(Mask(4, 4, 1));
  CHECK(full.pos == 0.0);
  CHECK(full.neg == 1.0);
  Mask halves(4, 4);
  for (int64_t c = 0; c < 4; ++c) halves(0, c) = halves(1, c) = 1;
  CHECK(hns::balance_weights(halves).pos == 0.5);
  CHECK(hns::balance_weights(halves).neg == 0.5);
  CHECK_THROWS_AS(hns::balance_weights(Mask()), hns::ValidationError);
}

TEST_CASE("make_sample derives pyramid and weights") {
  auto mask = square(32, 4, 4, 10);
  auto s = hns::make_sample(torch::zeros({3, 32, 32}), mask, {8, 16});
  REQUIRE(s.border_masks.size() == 2);
  CHECK(s.border_masks[0].height() == 4);
  CHECK(s.border_masks[1] == oracle::max_pool(oracle::border(mask, 1), 16));
  CHECK(s.pos_weight == doctest::Approx(1.0 - 100.0 / 1024.0));
  CHECK_THROWS_AS(hns::make_sample(torch::zeros({3, 16, 32}), mask, {8}), hns::ValidationError);
  CHECK_THROWS_AS(hns::make_sample(torch::zeros({1, 32, 32}), mask, {8}), hns::ValidationError);
}

TEST_CASE("collate stacks samples") {
  auto a = hns::make_sample(torch::zeros({3, 32, 32}), square(32, 0, 0, 8), {8});
  auto b = hns::make_sample(torch::ones({3, 32, 32}), square(32, 8, 8, 16), {8});
  auto batch = hns::collate({a, b});
  CHECK(batch.size() == 2);
  CHECK(batch.images.sizes() == torch::IntArrayRef({2, 3, 32, 32}));
  CHECK(batch.road.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
  CHECK(batch.borders[0].sizes() == torch::IntArrayRef({2, 1, 4, 4}));
  CHECK(batch.road_pos_weight[1].item<double>() == doctest::Approx(b.pos_weight));
  auto c = hns::make_sample(torch::zeros({3, 32, 32}), square(32, 0, 0, 8), {16});
  CHECK_THROWS_AS(hns::collate({a, c}), hns::ValidationError);
  CHECK_THROWS_AS(hns::collate({}), hns::ValidationError);
}

TEST_CASE("crops are deterministic and congruent") {
  hns::SynthOptions opts;
  opts.size = 96;
  opts.seed = 5;
  auto tiles = hns::synth_tiles(3, opts);
  auto source = std::make_shared<hns::MemoryTileSource>(tiles);
  hns::DatasetSpec spec;
  spec.crop_size = 64;
  spec.seed = 9;
  hns::Dataset one(spec, source), two(spec, source);
  for (int64_t i = 0; i < 3; ++i) {
    auto x = one.sample_crop(i, 2, {8});
    auto y = two.sample_crop(i, 2, {8});
    CHECK(torch::equal(x.image, y.image));
    CHECK(x.road_mask == y.road_mask);
    CHECK(x.border_masks == y.border_masks);
    const auto [r, c] = one.crop_origin(i, 2, 96, 96);
    CHECK(x.road_mask == tiles[i].mask.crop(r, c, 64, 64));
    CHECK(torch::equal(x.image, tiles[i].image.slice(1, r, r + 64).slice(2, c, c + 64)));
    CHECK(x.border_masks[0] == hns::border_pyramid(hns::extract_border(x.road_mask, 1), {8})[0]);
  }
  CHECK(one.epoch_order(4) == two.epoch_order(4));
  bool differs = false;
  for (int64_t e = 0; e < 10; ++e) differs = differs || one.crop_origin(0, e, 96, 96) != one.crop_origin(0, 0, 96, 96);
  CHECK(differs);
}

TEST_CASE("crop origins of a large tile stay in range") {
  auto source = std::make_shared<hns::MemoryTileSource>(std::vector<hns::RawTile>{});
  hns::DatasetSpec spec;
  spec.crop_size = 256;
  hns::Dataset ds(spec, source);
  for (int64_t i = 0; i < 200; ++i) {
    const auto [r, c] = ds.crop_origin(i, i / 7, 1500, 1500);
    REQUIRE(r >= 0);
    REQUIRE(r <= 1244);
    REQUIRE(c >= 0);
    REQUIRE(c <= 1244);
  }
}

TEST_CASE("road-free crop has zero positive weight") {
  hns::RawTile tile{torch::rand({3, 64, 64}), Mask(64, 64), "blank"};
  hns::DatasetSpec spec;
  spec.crop_size = 32;
  hns::Dataset ds(spec, std::make_shared<hns::MemoryTileSource>(std::vector<hns::RawTile>{tile}));
  auto s = ds.sample_crop(0, 0, {8});
  CHECK_FALSE(s.road_mask.any());
  CHECK(s.neg_weight == 0.0);
  CHECK(s.pos_weight == 1.0);
}

TEST_CASE("synthetic tiles") {
  hns::SynthOptions opts;
  CHECK(hns::synth_tiles(0, opts).empty());
  opts.seed = 21;
  auto a = hns::synth_tiles(4, opts), b = hns::synth_tiles(4, opts);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(torch::equal(a[i].image, b[i].image));
    CHECK(a[i].mask == b[i].mask);
  }
  opts.size = 32;
  CHECK_THROWS_AS(hns::synth_tiles(1, opts), hns::ValidationError);
}

TEST_CASE("synthetic road density stays in (0, 0.5) over 100 seeds") {
  hns::SynthOptions opts;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    opts.seed = seed;
    auto tile = hns::synth_tiles(1, opts)[0];
    const double f = static_cast<double>(tile.mask.count()) / static_cast<double>(tile.mask.size());
    REQUIRE(f > 0.0);
    REQUIRE(f < 0.5);
  }
}

TEST_CASE("directory source pairs by stem and reports mismatches") {
  auto dir = scratch_dir("dirsource");
  hns::SynthOptions opts;
  opts.size = 64;
  auto tiles = hns::synth_tiles(2, opts);
  for (const auto& t : tiles) {
    hns::write_image(dir / "images" / (t.name + ".png"), t.image);
    hns::write_mask(dir / "masks" / (t.name + ".png"), t.mask);
  }
  hns::DirectoryTileSource source(dir / "images", dir / "masks");
  REQUIRE(source.size() == 2);
  auto loaded = source.load(0);
  CHECK(loaded.mask == tiles[0].mask);
  CHECK((loaded.image - tiles[0].image).abs().max().item<double>() <= 0.5 / 255.0 + 1e-6);

  hns::write_mask(dir / "masks" / "orphan.png", tiles[0].mask);
  try {
    hns::DirectoryTileSource bad(dir / "images", dir / "masks");
    FAIL("expected a mismatch error");
  } catch (const hns::ValidationError& e) {
    CHECK(std::string(e.what()).find("orphan") != std::string::npos);
  }
  CHECK_THROWS_AS(hns::DirectoryTileSource(dir / "missing", dir / "masks"), hns::IoError);
  CHECK_THROWS_AS(hns::read_image(dir / "nope.png"), hns::IoError);
}

TEST_CASE("mask binarization threshold is 128") {
  auto dir = scratch_dir("threshold");
  Mask m(2, 2);
  m(0, 0) = 1;
  hns::write_mask(dir / "m.png", m);
  CHECK(hns::read_mask(dir / "m.png") == m);
  auto grey = torch::tensor({127.0 / 255.0, 128.0 / 255.0, 0.0, 1.0}).reshape({1, 2, 2});
  hns::write_probability(dir / "g.png", grey);
  auto back = hns::read_mask(dir / "g.png");
  CHECK(back(0, 0) == 0);
  CHECK(back(0, 1) == 1);
  CHECK(back(1, 1) == 1);
}

TEST_CASE("overlay colours road pixels only") {
  auto image = torch::zeros({3, 4, 4});
  Mask road(4, 4);
  road(1, 1) = 1;
  auto out = hns::render_overlay(image, road, nullptr);
  CHECK(out[0][1][1].item<float>() == doctest::Approx(0.6));
  CHECK(out[1][1][1].item<float>() == doctest::Approx(0.0));
  CHECK(out[0][0][0].item<float>() == 0.0f);
}

}  // TEST_SUITE
