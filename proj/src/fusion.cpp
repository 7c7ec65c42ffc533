#include "fewgraph/fusion.hpp"

#include <stdexcept>

namespace fewgraph {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Base: return "base";
    case Variant::Global: return "g";
    case Variant::Local: return "l";
    case Variant::Full: return "full";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "base") return Variant::Base;
  if (name == "g" || name == "global") return Variant::Global;
  if (name == "l" || name == "local") return Variant::Local;
  if (name == "full") return Variant::Full;
  throw std::invalid_argument("unknown variant: " + name);
}

namespace {

GinConfig validated(GinConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

GraphModel::GraphModel(const GinConfig& gin, const BranchConfig& branch,
                       std::size_t feature_dim, std::uint64_t init_seed)
    : branch_(branch),
      encoder_([&]() -> GinEncoder {
        rng::Stream stream(init_seed);
        return GinEncoder(validated(gin), feature_dim, params_, stream);
      }()) {
  // The encoder consumed part of the init stream; attention parameters get
  // dedicated substreams so adding one module never shifts another's init.
  const std::size_t layer_count = encoder_.config().layers_used.size();
  const std::size_t hidden = encoder_.config().hidden_dim;
  if (branch_.needs_global()) {
    rng::Stream stream = rng::Stream::substream(init_seed, 1);
    global_attn_.emplace(branch_.global_attn, hidden, hidden, layer_count, "global_attn",
                         params_, stream);
  }
  if (branch_.needs_local()) {
    std::size_t inner = layer_count * hidden;
    if (branch_.variant == Variant::Full && !global_attn_->produces_weights()) inner = hidden;
    rng::Stream stream = rng::Stream::substream(init_seed, 2);
    local_attn_.emplace(branch_.local_attn, inner, hidden, branch_.substructure_count + 1,
                        "local_attn", params_, stream);
  }
}

std::size_t GraphModel::embedding_dim() const {
  const std::size_t hidden = encoder_.config().hidden_dim;
  const std::size_t concat_dim = encoder_.config().layers_used.size() * hidden;
  std::size_t inner = concat_dim;
  if (branch_.needs_global()) {
    inner = global_attn_->produces_weights() ? concat_dim : hidden;
  }
  if (!branch_.needs_local()) return inner;
  return local_attn_->produces_weights() ? inner : hidden;
}

Tensor GraphModel::global_fuse(const std::vector<Tensor>& layer_embeddings) const {
  if (layer_embeddings.empty()) {
    throw std::invalid_argument("global_fuse: no layer embeddings");
  }
  const std::span<const Tensor> parts(layer_embeddings.data(), layer_embeddings.size());
  if (!global_attn_) return concat_last(parts);
  if (global_attn_->produces_weights()) {
    const std::vector<Tensor> w = global_attn_->weights(layer_embeddings);
    std::vector<Tensor> blocks;
    blocks.reserve(layer_embeddings.size());
    for (std::size_t j = 0; j < layer_embeddings.size(); ++j) {
      blocks.push_back(scale(layer_embeddings[j], w[j]));
    }
    return concat_last(std::span<const Tensor>(blocks.data(), blocks.size()));
  }
  return global_attn_->aggregate(layer_embeddings);
}

Tensor GraphModel::local_fuse(const Tensor& graph_embedding,
                              const std::vector<Tensor>& substructure_embeddings) const {
  if (!local_attn_) {
    throw std::invalid_argument("local_fuse: variant has no local attention");
  }
  if (substructure_embeddings.empty()) {
    throw std::invalid_argument("local_fuse: no substructure embeddings");
  }
  std::vector<Tensor> sequence;
  sequence.reserve(substructure_embeddings.size() + 1);
  sequence.push_back(graph_embedding);
  for (const Tensor& h : substructure_embeddings) {
    if (h.shape() != graph_embedding.shape()) {
      throw std::invalid_argument("local_fuse: substructure embedding " +
                                  shape_str(h.shape()) + " does not match graph embedding " +
                                  shape_str(graph_embedding.shape()));
    }
    sequence.push_back(h);
  }
  if (local_attn_->produces_weights()) {
    const std::vector<Tensor> r = local_attn_->weights(sequence);
    Tensor out = scale(sequence[0], r[0]);
    for (std::size_t i = 1; i < sequence.size(); ++i) {
      out = add(out, scale(sequence[i], r[i]));
    }
    return out;
  }
  return local_attn_->aggregate(sequence);
}

Tensor GraphModel::encode(const Graph& g) const {
  const std::vector<Tensor> layers = encoder_.encode_layers(g);
  if (!branch_.needs_local()) return global_fuse(layers);

  if (g.substructures.empty()) {
    throw std::invalid_argument("variant '" + std::string(variant_name(branch_.variant)) +
                                "' needs substructures, graph '" + g.id + "' has none");
  }
  const Tensor graph_embedding = global_fuse(layers);
  std::vector<Tensor> sub_embeddings;
  sub_embeddings.reserve(g.substructures.size());
  for (const auto& nodes : g.substructures) {
    const Graph sub = induced_subgraph(g, nodes);
    sub_embeddings.push_back(global_fuse(encoder_.encode_layers(sub)));
  }
  return local_fuse(graph_embedding, sub_embeddings);
}

}  // namespace fewgraph
