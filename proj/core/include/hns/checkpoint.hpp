#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/optim/adam.h>

#include "hns/config.hpp"
#include "hns/model.hpp"

namespace hns {

inline constexpr int kCheckpointFormatVersion = 1;

/// Contents of manifest.json in a checkpoint directory.
struct Manifest {
  int format_version = kCheckpointFormatVersion;
  RunConfig config;
  std::string config_hash;
  int64_t step = 0;
  int64_t epoch = 0;  ///< completed epochs
  uint64_t seed = 0;
  std::string param_checksum;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

std::string checksum_hex(uint64_t checksum);

/// Writes params.pt, optional optimizer.pt and manifest.json. The directory is
/// assembled next to `dir` and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, HnsNet& model, torch::optim::Adam* optimizer,
                     Manifest manifest);

Manifest read_manifest(const std::filesystem::path& dir);

/// Rebuilds the model recorded in the manifest and loads its parameters.
/// When `expected` is given its model section must match the manifest.
HnsNet load_model(const std::filesystem::path& dir, const RunConfig* expected = nullptr);

void load_optimizer(const std::filesystem::path& dir, torch::optim::Adam& optimizer);

}  // namespace hns
