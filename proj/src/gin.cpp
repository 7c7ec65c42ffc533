#include "fewgraph/gin.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fewgraph {

void GinConfig::validate() const {
  if (num_layers == 0) throw std::invalid_argument("gin: num_layers must be >= 1");
  if (hidden_dim == 0) throw std::invalid_argument("gin: hidden_dim must be >= 1");
  if (mlp_layers == 0) throw std::invalid_argument("gin: mlp_layers must be >= 1");
  if (layers_used.empty()) throw std::invalid_argument("gin: layers_used must be non-empty");
  for (std::size_t l : layers_used) {
    if (l == 0 || l > num_layers) {
      throw std::invalid_argument("gin: layers_used entry " + std::to_string(l) +
                                  " outside 1.." + std::to_string(num_layers));
    }
  }
}

GinEncoder::GinEncoder(const GinConfig& cfg, std::size_t feature_dim, ParamSet& params,
                       rng::Stream& init)
    : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  // layers_used is a set; readouts come back in layer order.
  std::sort(cfg_.layers_used.begin(), cfg_.layers_used.end());
  cfg_.layers_used.erase(std::unique(cfg_.layers_used.begin(), cfg_.layers_used.end()),
                         cfg_.layers_used.end());
  if (feature_dim == 0) throw std::invalid_argument("gin: feature_dim must be >= 1");
  layers_.resize(cfg_.num_layers);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    std::size_t in_dim = l == 0 ? feature_dim : cfg_.hidden_dim;
    for (std::size_t m = 0; m < cfg_.mlp_layers; ++m) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
      const std::string prefix =
          "gin.layer" + std::to_string(l + 1) + ".mlp" + std::to_string(m);
      Affine a;
      a.w = params.add(prefix + ".weight", uniform_init({in_dim, cfg_.hidden_dim}, bound, init));
      a.b = params.add(prefix + ".bias", uniform_init({cfg_.hidden_dim}, bound, init));
      layers_[l].push_back(a);
      in_dim = cfg_.hidden_dim;
    }
    if (cfg_.learnable_eps) {
      eps_.push_back(params.add("gin.layer" + std::to_string(l + 1) + ".eps",
                                Tensor::scalar(cfg_.eps)));
    }
  }
}

Tensor GinEncoder::layer_forward(const Tensor& nodes, const Tensor& adjacency,
                                 std::size_t layer) const {
  if (layer >= layers_.size()) throw std::invalid_argument("gin: layer index out of range");
  if (nodes.rank() != 2 || adjacency.rank() != 2 ||
      adjacency.shape()[0] != adjacency.shape()[1] || nodes.shape()[0] != adjacency.shape()[0]) {
    throw std::invalid_argument("gin: node matrix " + shape_str(nodes.shape()) +
                                " does not match adjacency " + shape_str(adjacency.shape()));
  }
  const Tensor neighbor_sum = matmul(adjacency, nodes);
  Tensor self;
  if (cfg_.learnable_eps) {
    self = scale(nodes, add(eps_[layer], Tensor::scalar(1.0)));
  } else {
    self = scale(nodes, 1.0 + cfg_.eps);
  }
  Tensor h = add(neighbor_sum, self);
  for (std::size_t m = 0; m < layers_[layer].size(); ++m) {
    if (m > 0) h = relu(h);
    h = affine(h, layers_[layer][m].w, layers_[layer][m].b);
  }
  return h;
}

Tensor GinEncoder::readout(const Tensor& nodes) {
  if (nodes.rank() != 2 || nodes.shape()[0] == 0) {
    throw std::invalid_argument("readout: expected a non-empty node matrix");
  }
  return reduce_mean(nodes, 0);
}

std::vector<Tensor> GinEncoder::encode_layers(const Graph& g) const {
  if (g.feature_dim != feature_dim_) {
    throw std::invalid_argument("gin: graph '" + g.id + "' has feature width " +
                                std::to_string(g.feature_dim) + ", encoder expects " +
                                std::to_string(feature_dim_));
  }
  const Tensor adjacency = adjacency_tensor(g);
  Tensor h = feature_tensor(g);
  std::vector<Tensor> out;
  out.reserve(cfg_.layers_used.size());
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    h = layer_forward(h, adjacency, l);
    for (std::size_t used : cfg_.layers_used) {
      if (used == l + 1) out.push_back(readout(h));
    }
  }
  return out;
}

}  // namespace fewgraph
