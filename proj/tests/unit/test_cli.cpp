#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using hns::cli::run;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hns_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;
}

// Four 64 px training tiles and two test tiles under `root`.
void make_data(const fs::path& root) {
  REQUIRE(run({"synth", "-o", root.string(), "--count", "4", "--size", "64", "--seed", "1"}) == 0);
  REQUIRE(run({"synth", "-o", root.string(), "--count", "2", "--size", "64", "--seed", "2", "--split",
               "test"}) == 0);
}

std::vector<std::string> tiny_overrides(const fs::path& root) {
  return {"-s", "data.root=" + root.string(), "-s", "data.crop_size=64", "-s", "model.width_divisor=16",
          "-s", "train.batch_size=2", "-s", "train.epochs=1", "-s", "data.val_split=\"\""};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth output is byte-identical for equal seeds") {
  auto a = scratch("synth_a"), b = scratch("synth_b");
  REQUIRE(run({"synth", "-o", a.string(), "--count", "2", "--size", "64", "--seed", "9"}) == 0);
  REQUIRE(run({"synth", "-o", b.string(), "--count", "2", "--size", "64", "--seed", "9"}) == 0);
  for (const auto& entry : fs::recursive_directory_iterator(a / "train")) {
    if (!entry.is_regular_file()) continue;
    auto twin = b / fs::relative(entry.path(), a);
    REQUIRE(fs::exists(twin));
    CHECK(slurp(entry.path()) == slurp(twin));
  }
  CHECK(fs::exists(a / "train" / "images" / "synth_00001.png"));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({"--definitely-not-a-flag"}) == 1);
  CHECK(run({"synth", "--count", "-3"}) == 1);
  CHECK(run({"eval"}) == 1);
  auto out = scratch("usage");
  CHECK(run({"synth", "-o", out.string(), "-s", "train.bogus=1"}) == 1);
  CHECK(run({"synth", "-o", out.string(), "--size", "16", "--count", "1"}) == 1);
  CHECK(run({"train", "-o", out.string(), "-c", (out / "missing.toml").string()}) == 2);
}

TEST_CASE("train, eval, predict and re-fed config") {
  auto root = scratch("pipeline");
  make_data(root / "data");
  auto out = root / "run";
  REQUIRE(run(cat({"train", "-o", out.string()}, tiny_overrides(root / "data"))) == 0);
  CHECK(fs::exists(out / "train_log.csv"));
  CHECK(fs::exists(out / "checkpoints" / "epoch_0001" / "params.pt"));
  CHECK(fs::exists(out / "resolved_config.toml"));
  CHECK(data_lines(out / "train_log.csv") == 2);

  auto again = root / "again";
  REQUIRE(run({"train", "-o", again.string(), "-c", (out / "resolved_config.toml").string()}) == 0);
  CHECK(slurp(again / "train_log.csv") == slurp(out / "train_log.csv"));
  CHECK(slurp(again / "resolved_config.toml") == slurp(out / "resolved_config.toml"));

  REQUIRE(run({"eval", "-o", out.string(), "-c", (out / "resolved_config.toml").string(), "--checkpoint",
               (out / "checkpoints").string(), "--overlays"}) == 0);
  auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
  for (const char* key : {"iou", "precision", "recall", "f1", "boundary_f", "counts", "per_image", "reference"}) {
    CHECK(metrics.contains(key));
  }
  for (const char* t : {"1", "2", "3", "4", "5"}) CHECK(metrics["boundary_f"].contains(t));
  CHECK(metrics["images"] == 2);

  auto bu = root / "bu";
  CHECK(run({"eval", "-o", bu.string(), "-c", (out / "resolved_config.toml").string(), "-s",
             "model.variant=BU", "--checkpoint", (out / "checkpoints").string()}) == 1);

  auto image = root / "data" / "test" / "images" / "synth_00000.png";
  REQUIRE(run({"predict", "-o", (root / "pred").string(), "-c", (out / "resolved_config.toml").string(),
               "--checkpoint", (out / "checkpoints" / "epoch_0001").string(), "-i", image.string()}) == 0);
  CHECK(fs::exists(root / "pred" / "synth_00000_road.png"));
  CHECK(fs::exists(root / "pred" / "synth_00000_border_s8.png"));
  CHECK(fs::exists(root / "pred" / "synth_00000_overlay.png"));
}

TEST_CASE("smoke ablation writes one row per variant") {
  auto root = scratch("ablate");
  make_data(root / "data");
  REQUIRE(run(cat({"ablate", "-o", (root / "out").string(), "--variants", "BU,full", "--smoke"},
                  tiny_overrides(root / "data"))) == 0);
  CHECK(data_lines(root / "out" / "ablation.csv") == 2);
  auto j = nlohmann::json::parse(slurp(root / "out" / "ablation.json"));
  CHECK(j["rows"].size() == 2);
  CHECK(run(cat({"ablate", "-o", (root / "out").string(), "--variants", "BU,E9", "--smoke"},
                tiny_overrides(root / "data"))) == 1);
}

TEST_CASE("prepare and make-borders") {
  auto root = scratch("prep");
  make_data(root / "data");
  REQUIRE(run({"prepare", "-o", (root / "out").string(), "-s", "data.root=" + (root / "data").string(),
               "-s", "data.crop_size=64"}) == 0);
  auto index = nlohmann::json::parse(slurp(root / "out" / "prepare_train.json"));
  CHECK(index.dump().find("synth_00003") != std::string::npos);
  REQUIRE(run({"make-borders", "-o", (root / "borders").string(), "--input-dir",
               (root / "data" / "train" / "masks").string()}) == 0);
  int pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "borders"))
    if (e.path().extension() == ".png") ++pngs;
  CHECK(pngs == 4);
  fs::create_directories(root / "bad" / "train" / "images");
  fs::create_directories(root / "bad" / "train" / "masks");
  fs::copy_file(root / "data" / "train" / "images" / "synth_00000.png", root / "bad" / "train" / "images" / "x.png");
  CHECK(run({"prepare", "-o", (root / "out2").string(), "-s", "data.root=" + (root / "bad").string()}) == 1);
}

}  // TEST_SUITE
