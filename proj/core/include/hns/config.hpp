#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hns/data_pipeline.hpp"
#include "hns/model.hpp"

namespace hns {

struct DataConfig {
  std::string root;  ///< empty: $HNS_DATA_ROOT
  std::string image_subdir = "images";
  std::string mask_subdir = "masks";
  std::string train_split = "train";
  std::string val_split = "val";
  std::string test_split = "test";
  int crop_size = 256;
  uint64_t seed = 0;
  int tile_stride = 0;

  std::filesystem::path resolved_root() const;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
  int batch_size = 20;
  int epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
  int eval_interval = 1;
  int64_t max_steps = 0;  ///< stop after this many steps; 0 = no limit
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;

  /// Dataset spec for `split` under the data root.
  DatasetSpec dataset(const std::string& split) const;

  /// Applies `section.key=value`; value is a TOML literal or a bare string.
  void set(const std::string& assignment);
  void validate() const;

  std::string to_toml() const;
  static RunConfig from_toml(const std::string& text);
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  /// Hex FNV-1a of the canonical TOML form.
  std::string hash() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

/// Parses one TOML value literal (string, integer, float, bool, array).
nlohmann::json parse_toml_value(const std::string& literal);

}  // namespace hns
