#include "hns/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <torch/serialize.h>
#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string checksum_hex(uint64_t checksum) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << checksum;
  return s.str();
}

json Manifest::to_json() const {
  return {{"format_version", format_version},
          {"config", config.to_json()},
          {"config_hash", config_hash},
          {"step", step},
          {"epoch", epoch},
          {"seed", seed},
          {"param_checksum", param_checksum},
          {"metrics", metrics}};
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kCheckpointFormatVersion) {
    throw ValidationError("unsupported checkpoint format_version " + std::to_string(m.format_version));
  }
  m.config = RunConfig::from_json(j.at("config"));
  m.config_hash = j.at("config_hash").get<std::string>();
  m.step = j.at("step").get<int64_t>();
  m.epoch = j.at("epoch").get<int64_t>();
  m.seed = j.at("seed").get<uint64_t>();
  m.param_checksum = j.at("param_checksum").get<std::string>();
  m.metrics = j.value("metrics", json::object());
  return m;
}

void save_checkpoint(const fs::path& dir, HnsNet& model, torch::optim::Adam* optimizer, Manifest manifest) {
  const fs::path staging = dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + staging.string() + ": " + ec.message());
  try {
    torch::serialize::OutputArchive params;
    model->save(params);
    params.save_to((staging / "params.pt").string());
    if (optimizer != nullptr) {
      torch::serialize::OutputArchive state;
      optimizer->save(state);
      state.save_to((staging / "optimizer.pt").string());
    }
  } catch (const c10::Error& e) {
    fs::remove_all(staging, ec);
    throw IoError("cannot write checkpoint " + dir.string() + ": " + e.what_without_backtrace());
  }
  manifest.config_hash = manifest.config.hash();
  manifest.param_checksum = checksum_hex(parameter_checksum(*model));
  {
    std::ofstream out(staging / "manifest.json");
    out << std::setw(2) << manifest.to_json() << "\n";
    if (!out) {
      fs::remove_all(staging, ec);
      throw IoError("cannot write manifest in " + staging.string());
    }
  }
  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot read " + (dir / "manifest.json").string());
  try {
    return Manifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

HnsNet load_model(const fs::path& dir, const RunConfig* expected) {
  const auto manifest = read_manifest(dir);
  if (expected != nullptr && !(expected->model == manifest.config.model)) {
    throw ValidationError("checkpoint/config mismatch: " + dir.string() +
                          " was trained with a different model configuration");
  }
  auto model = build_model(manifest.config.model, manifest.config.train.seed);
  try {
    torch::serialize::InputArchive params;
    params.load_from((dir / "params.pt").string());
    model->load(params);
  } catch (const c10::Error& e) {
    throw ValidationError("checkpoint/config mismatch: cannot load parameters from " + dir.string() + ": " +
                          e.what_without_backtrace());
  }
  if (checksum_hex(parameter_checksum(*model)) != manifest.param_checksum) {
    throw ValidationError("parameter checksum mismatch in " + dir.string());
  }
  return model;
}

void load_optimizer(const fs::path& dir, torch::optim::Adam& optimizer) {
  try {
    torch::serialize::InputArchive state;
    state.load_from((dir / "optimizer.pt").string());
    optimizer.load(state);
  } catch (const c10::Error& e) {
    throw IoError("cannot load optimizer state from " + dir.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace hns
