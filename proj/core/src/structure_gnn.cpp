#include "hns/structure_gnn.hpp"

#include <cmath>

#include <torch/torch.h>

#include "hns/errors.hpp"

namespace hns {

namespace nn = torch::nn;

torch::Tensor to_nodes(const torch::Tensor& feature_map) {
  if (feature_map.dim() != 4) throw ValidationError("expected a [B, C, H, W] feature map");
  return feature_map.flatten(2).transpose(1, 2);
}

torch::Tensor from_nodes(const torch::Tensor& nodes, int64_t height, int64_t width) {
  if (nodes.dim() != 3 || nodes.size(1) != height * width) {
    throw ValidationError("node count does not match the spatial size");
  }
  return nodes.transpose(1, 2).reshape({nodes.size(0), nodes.size(2), height, width});
}

torch::Tensor fuse_streams(const torch::Tensor& upper, const torch::Tensor& lower, int64_t height,
                           int64_t width) {
  if (upper.sizes() != lower.sizes()) throw ValidationError("stream outputs differ in shape");
  return from_nodes(upper.dim() == 2 ? (upper + lower).unsqueeze(0) : upper + lower, height, width);
}

namespace {

torch::Tensor batched(const torch::Tensor& nodes, const char* what) {
  if (nodes.dim() == 2) return nodes.unsqueeze(0);
  if (nodes.dim() != 3) throw ValidationError(std::string(what) + " must be [B, N, C] or [N, C]");
  return nodes;
}

// Restores the caller's rank.
torch::Tensor like_input(const torch::Tensor& out, const torch::Tensor& input) {
  return input.dim() == 2 ? out.squeeze(0) : out;
}

void check_pair(const torch::Tensor& border, const torch::Tensor& road) {
  if (border.size(0) != road.size(0) || border.size(1) != road.size(1)) {
    throw ValidationError("border and road node sets differ in batch or node count");
  }
  if (border.size(1) == 0) throw ValidationError("node set is empty");
}

}  // namespace

StructureGnnImpl::StructureGnnImpl(const StructureGnnOptions& o) : options_(o) {
  if (o.latent_nodes <= 0 || o.latent_dim <= 0) {
    throw ConfigError("latent graph sizes D1 and D2 must be positive");
  }
  if (o.attention_dim <= 0 || o.border_channels <= 0 || o.road_channels <= 0 || o.out_channels <= 0) {
    throw ConfigError("structure GNN widths must be positive");
  }
  if (!o.upper_stream && !o.lower_stream) throw ConfigError("structure GNN needs at least one stream");
  auto linear = [](int64_t in, int64_t out) { return nn::Linear(nn::LinearOptions(in, out).bias(false)); };
  if (o.upper_stream) {
    query = register_module("query", linear(o.border_channels, o.attention_dim));
    key = register_module("key", linear(o.border_channels, o.attention_dim));
    value = register_module("value", linear(o.road_channels, o.out_channels));
  }
  if (o.lower_stream) {
    border_proj = register_module("border_proj", linear(o.border_channels, o.latent_nodes));
    road_proj = register_module("road_proj", linear(o.road_channels, o.latent_dim));
    reprojection = register_module("reprojection", linear(o.road_channels, o.latent_nodes));
    output_transform = register_module("output_transform", nn::Linear(o.latent_dim, o.out_channels));
    adjacency = register_parameter(
        "adjacency", torch::randn({o.latent_nodes, o.latent_nodes}) * o.adjacency_init_std);
    auto w = torch::empty({o.latent_dim, o.latent_dim});
    nn::init::kaiming_uniform_(w, std::sqrt(5.0));
    graph_weight = register_parameter("graph_weight", w);
  }
}

torch::Tensor StructureGnnImpl::attention(const torch::Tensor& border_nodes) {
  if (!query) throw ConfigError("upper stream is disabled");
  auto xb = batched(border_nodes, "border nodes");
  if (xb.size(1) == 0) throw ValidationError("node set is empty");
  auto q = query->forward(xb);
  auto k = key->forward(xb);
  auto scores = torch::bmm(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(options_.attention_dim));
  return like_input(torch::softmax(scores, -1), border_nodes);
}

torch::Tensor StructureGnnImpl::co_attention(const torch::Tensor& border_nodes,
                                             const torch::Tensor& road_nodes) {
  auto xb = batched(border_nodes, "border nodes");
  auto xr = batched(road_nodes, "road nodes");
  check_pair(xb, xr);
  auto weights = attention(xb);
  return like_input(torch::bmm(weights, value->forward(xr)), border_nodes);
}

torch::Tensor StructureGnnImpl::graph_convolution(const torch::Tensor& projected) {
  if (!border_proj) throw ConfigError("lower stream is disabled");
  const auto eye = torch::eye(options_.latent_nodes, adjacency.options());
  return torch::matmul(torch::matmul(eye - adjacency, projected), graph_weight);
}

LatentTrace StructureGnnImpl::latent_graph_trace(const torch::Tensor& border_nodes,
                                                 const torch::Tensor& road_nodes) {
  if (!border_proj) throw ConfigError("lower stream is disabled");
  auto xb = batched(border_nodes, "border nodes");
  auto xr = batched(road_nodes, "road nodes");
  check_pair(xb, xr);
  LatentTrace trace;
  // Averaged over nodes so the latent graph's scale does not grow with the image area.
  trace.projected = torch::bmm(border_proj->forward(xb).transpose(1, 2), road_proj->forward(xr)) /
                    static_cast<double>(xb.size(1));
  trace.smoothed = graph_convolution(trace.projected);
  auto coefficients = reprojection->forward(xr);  // [B, N, D1]
  trace.output = output_transform->forward(torch::bmm(coefficients, trace.smoothed));
  if (border_nodes.dim() == 2) {
    trace.projected = trace.projected.squeeze(0);
    trace.smoothed = trace.smoothed.squeeze(0);
    trace.output = trace.output.squeeze(0);
  }
  return trace;
}

torch::Tensor StructureGnnImpl::latent_graph_reason(const torch::Tensor& border_nodes,
                                                    const torch::Tensor& road_nodes) {
  return latent_graph_trace(border_nodes, road_nodes).output;
}

torch::Tensor StructureGnnImpl::forward(const torch::Tensor& border_map, const torch::Tensor& road_map) {
  if (border_map.dim() != 4 || road_map.dim() != 4 ||
      border_map.sizes().slice(2) != road_map.sizes().slice(2)) {
    throw ValidationError("border and road maps must be [B, C, H, W] with equal spatial size");
  }
  const int64_t h = road_map.size(2), w = road_map.size(3);
  auto xb = to_nodes(border_map);
  auto xr = to_nodes(road_map);
  torch::Tensor upper, lower;
  if (options_.upper_stream) upper = co_attention(xb, xr);
  if (options_.lower_stream) lower = latent_graph_reason(xb, xr);
  if (!upper.defined()) return from_nodes(lower, h, w);
  if (!lower.defined()) return from_nodes(upper, h, w);
  return fuse_streams(upper, lower, h, w);
}

}  // namespace hns
