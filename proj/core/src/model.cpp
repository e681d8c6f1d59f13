#include "hns/model.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::BU: return "BU";
    case Variant::SG: return "SG";
    case Variant::E1: return "E1";
    case Variant::E2: return "E2";
    case Variant::Full: return "full";
  }
  return "full";
}

Variant parse_variant(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), ::tolower);
  if (t == "bu") return Variant::BU;
  if (t == "sg") return Variant::SG;
  if (t == "e1") return Variant::E1;
  if (t == "e2") return Variant::E2;
  if (t == "full") return Variant::Full;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected BU, SG, E1, E2, full)");
}

std::string to_string(NormKind n) { return n == NormKind::Batch ? "batch" : "group"; }

NormKind parse_norm(std::string_view text) {
  if (text == "batch") return NormKind::Batch;
  if (text == "group") return NormKind::Group;
  throw ConfigError("unknown norm '" + std::string(text) + "' (expected batch or group)");
}

namespace {

struct VariantFields {
  std::vector<int> gnn_levels;
  bool border_heads, upper, lower;
};

VariantFields variant_fields(Variant v) {
  switch (v) {
    case Variant::BU: return {{}, false, false, false};
    case Variant::SG: return {{2, 3, 4}, false, true, false};
    case Variant::E1: return {{4}, true, true, true};
    case Variant::E2: return {{3, 4}, true, true, true};
    case Variant::Full: return {{2, 3, 4}, true, true, true};
  }
  return {};
}

std::string join(const std::vector<int>& v) {
  std::ostringstream s;
  s << "[";
  for (size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  s << "]";
  return s.str();
}

}  // namespace

ModelConfig ModelConfig::preset(Variant v) {
  ModelConfig c;
  c.apply_variant(v);
  return c;
}

ModelConfig& ModelConfig::apply_variant(Variant v) {
  const auto f = variant_fields(v);
  variant = v;
  gnn_levels = f.gnn_levels;
  enable_border_heads = f.border_heads;
  enable_upper_stream = f.upper;
  enable_lower_stream = f.lower;
  return *this;
}

void ModelConfig::validate() const {
  const auto f = variant_fields(variant);
  const std::string name(to_string(variant));
  auto levels = gnn_levels;
  std::sort(levels.begin(), levels.end());
  if (levels != f.gnn_levels) {
    throw ConfigError("variant " + name + " requires gnn_levels " + join(f.gnn_levels) + ", got " +
                      join(gnn_levels));
  }
  auto flag = [&](const char* field, bool want, bool got) {
    if (want != got) {
      throw ConfigError("variant " + name + " requires " + field + " = " + (want ? "true" : "false"));
    }
  };
  flag("enable_border_heads", f.border_heads, enable_border_heads);
  flag("enable_upper_stream", f.upper, enable_upper_stream);
  flag("enable_lower_stream", f.lower, enable_lower_stream);
  if (width_divisor < 1) throw ConfigError("width_divisor must be >= 1");
  for (size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw ConfigError("widths must be positive");
    if (i > 0 && widths[i] < widths[i - 1]) throw ConfigError("widths must be nondecreasing");
  }
  if (attention_dim < 1) throw ConfigError("attention_dim must be positive");
  if (latent_nodes < 1 || latent_dim < 1) throw ConfigError("latent_nodes and latent_dim must be positive");
  if (border_channels < 1) throw ConfigError("border_channels must be positive");
  if (!(consistency_weight >= 0.0)) throw ConfigError("consistency_weight must be >= 0");
}

int64_t ModelConfig::scaled(int64_t value) const { return std::max<int64_t>(1, value / width_divisor); }

int64_t ModelConfig::width(int level) const { return scaled(widths.at(static_cast<size_t>(level - 1))); }

std::array<int64_t, 4> ModelConfig::effective_widths() const {
  return {width(1), width(2), width(3), width(4)};
}

bool ModelConfig::has_gnn(int level) const {
  return std::find(gnn_levels.begin(), gnn_levels.end(), level) != gnn_levels.end();
}

std::vector<int> ModelConfig::border_strides() const {
  std::vector<int> strides;
  if (!enable_border_heads) return strides;
  for (int level = 1; level <= 4; ++level) {
    if (has_gnn(level)) strides.push_back(level_stride(level));
  }
  return strides;
}

DecoderMergeImpl::DecoderMergeImpl(int64_t coarse_channels, int64_t skip_channels, NormKind norm) {
  attention_ = register_module("attention", ElementAttention(skip_channels, coarse_channels));
  refine_ = register_module(
      "refine", nn::Conv2d(nn::Conv2dOptions(coarse_channels, skip_channels, 3).padding(1).bias(false)));
  norm_ = register_module("norm", Norm2d(norm, skip_channels));
}

torch::Tensor DecoderMergeImpl::forward(const torch::Tensor& coarse, const torch::Tensor& skip) {
  auto up = resize_like(coarse, skip);
  auto gated = attention_->forward(skip, up);
  return torch::relu(norm_->forward(refine_->forward(gated))) + skip;
}

HnsNetImpl::HnsNetImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto w = config_.effective_widths();
  encoder = register_module("encoder", Encoder(w, config_.norm));
  const int64_t border_channels = config_.scaled(config_.border_channels);
  for (int level = 2; level <= 4; ++level) {
    const auto l = static_cast<size_t>(level);
    const std::string suffix = std::to_string(level);
    level_fusion[l] = register_module("level_fusion" + suffix, ElementAttention(w[l - 2], w[l - 1]));
    if (!config_.has_gnn(level)) continue;
    StructureGnnOptions o;
    o.road_channels = w[l - 1];
    o.out_channels = w[l - 1];
    o.border_channels = config_.enable_border_heads ? border_channels : w[l - 1];
    o.attention_dim = config_.scaled(config_.attention_dim);
    o.latent_nodes = config_.scaled(config_.latent_nodes);
    o.latent_dim = config_.scaled(config_.latent_dim);
    o.upper_stream = config_.enable_upper_stream;
    o.lower_stream = config_.enable_lower_stream;
    if (config_.enable_border_heads) {
      border_heads[l] = register_module("border_head" + suffix, BorderHead(w[l - 1], border_channels));
    }
    gnns[l] = register_module("gnn" + suffix, StructureGnn(o));
    gnn_fusion[l] = register_module("gnn_fusion" + suffix, ElementAttention(w[l - 1], w[l - 1]));
  }
  for (int level = 1; level <= 3; ++level) {
    const auto l = static_cast<size_t>(level);
    decoder[l] = register_module("decoder" + std::to_string(level),
                                 DecoderMerge(w[l], w[l - 1], config_.norm));
  }
  classifier = register_module("classifier", nn::Conv2d(nn::Conv2dOptions(w[0], 1, 1)));
  for (auto& m : modules(false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      torch::NoGradGuard guard;
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (c->bias.defined()) c->bias.zero_();
    }
  }
  // The gates start neutral and the classifier starts near zero logits.
  torch::NoGradGuard guard;
  classifier->weight.mul_(0.1);
}

PredictionBundle HnsNetImpl::forward(torch::Tensor image) {
  if (image.dim() == 3) image = image.unsqueeze(0);
  const auto features = encoder->forward(image);
  std::array<torch::Tensor, 5> skip;
  skip[1] = features.level(1);
  PredictionBundle bundle;
  for (int level = 2; level <= 4; ++level) {
    const auto l = static_cast<size_t>(level);
    const auto& encoded = features.level(level);
    auto road = level_fusion[l]->forward(features.level(level - 1), encoded);
    if (!gnns[l]) {
      skip[l] = road;
      continue;
    }
    torch::Tensor border_feature = road;
    if (border_heads[l]) {
      auto border = border_heads[l]->forward(road);
      border_feature = border.feature;
      bundle.border_levels.push_back(level);
      bundle.border_strides.push_back(level_stride(level));
      bundle.border_probs.push_back(border.prob);
    }
    auto reasoned = gnns[l]->forward(border_feature, road);
    skip[l] = gnn_fusion[l]->forward(encoded, reasoned) + road;
  }
  auto decoded = skip[4];
  for (int level = 3; level >= 1; --level) {
    decoded = decoder[static_cast<size_t>(level)]->forward(decoded, skip[static_cast<size_t>(level)]);
  }
  // 1x1 conv then bilinear x4; both are linear, so the order is immaterial.
  auto logits = classifier->forward(decoded);
  bundle.road_logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                                  .size(std::vector<int64_t>{image.size(2), image.size(3)})
                                                  .mode(torch::kBilinear)
                                                  .align_corners(false));
  bundle.road_prob = torch::sigmoid(bundle.road_logits);
  return bundle;
}

int HnsNetImpl::border_head_count() const {
  return static_cast<int>(std::count_if(border_heads.begin(), border_heads.end(),
                                        [](const BorderHead& h) { return !h.is_empty(); }));
}

int HnsNetImpl::gnn_count() const {
  return static_cast<int>(
      std::count_if(gnns.begin(), gnns.end(), [](const StructureGnn& g) { return !g.is_empty(); }));
}

int64_t HnsNetImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

HnsNet build_model(const ModelConfig& config, uint64_t seed) {
  torch::manual_seed(seed);
  return HnsNet(config);
}

uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> named;
  for (const auto& p : module.named_parameters()) named["p:" + p.key()] = p.value();
  for (const auto& b : module.named_buffers()) named["b:" + b.key()] = b.value();
  uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
      hash ^= p[i];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, tensor] : named) {
    feed(name.data(), name.size());
    auto t = tensor.detach().contiguous().cpu();
    feed(t.data_ptr(), static_cast<size_t>(t.numel()) * t.element_size());
  }
  return hash;
}

}  // namespace hns
