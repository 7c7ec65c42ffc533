#pragma once

#include <cstddef>
#include <vector>

#include "fewgraph/graph.hpp"
#include "fewgraph/params.hpp"
#include "fewgraph/tensor.hpp"

namespace fewgraph {

struct GinConfig {
  std::size_t num_layers = 5;
  std::size_t hidden_dim = 64;
  std::size_t mlp_layers = 2;  // affine maps per GIN layer, relu between them
  double eps = 0.0;
  bool learnable_eps = false;
  std::vector<std::size_t> layers_used = {2, 3, 4, 5};  // 1-indexed

  void validate() const;
};

/// Multi-layer GIN message passing. Each layer maps node representations
/// through MLP((1+eps) h_v + sum_{u in N(v)} h_u); graph-level vectors are
/// mean readouts of the layers named in layers_used.
class GinEncoder {
 public:
  GinEncoder(const GinConfig& cfg, std::size_t feature_dim, ParamSet& params,
             rng::Stream& init);

  /// Graph-level representation per used layer, in layer order.
  std::vector<Tensor> encode_layers(const Graph& g) const;

  /// One message-passing layer (0-indexed); exposed for tests.
  Tensor layer_forward(const Tensor& nodes, const Tensor& adjacency, std::size_t layer) const;

  /// Column-wise mean over node representations.
  static Tensor readout(const Tensor& nodes);

  const GinConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return feature_dim_; }

 private:
  GinConfig cfg_;
  std::size_t feature_dim_;
  struct Affine {
    Tensor w, b;
  };
  std::vector<std::vector<Affine>> layers_;
  std::vector<Tensor> eps_;  // one learnable scalar per layer when enabled
};

}  // namespace fewgraph
