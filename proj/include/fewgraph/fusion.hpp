#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fewgraph/attention.hpp"
#include "fewgraph/gin.hpp"
#include "fewgraph/graph.hpp"
#include "fewgraph/params.hpp"

namespace fewgraph {

/// How encoder outputs compose into the final graph embedding.
///  Base   — plain concatenation of the used layer readouts.
///  Global — layer readouts weighted/aggregated by the global attention.
///  Local  — concatenated embeddings of the graph and its substructures,
///           fused by the local attention.
///  Full   — global attention for graph and substructures, then local fusion.
enum class Variant { Base, Global, Local, Full };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct BranchConfig {
  Variant variant = Variant::Base;
  AttentionConfig global_attn;
  AttentionConfig local_attn;
  std::size_t substructure_count = 2;  // expected |substructures| per graph

  bool needs_global() const { return variant == Variant::Global || variant == Variant::Full; }
  bool needs_local() const { return variant == Variant::Local || variant == Variant::Full; }
};

/// One encoder branch: GIN encoder plus the attention modules its variant
/// needs. Forward passes are read-only over the parameters.
class GraphModel {
 public:
  GraphModel(const GinConfig& gin, const BranchConfig& branch, std::size_t feature_dim,
             std::uint64_t init_seed);

  /// Final embedding of a graph under this branch.
  Tensor encode(const Graph& g) const;

  std::size_t embedding_dim() const;

  /// Applies the branch's global attention over layer readouts (Base
  /// behavior when the variant has no global attention).
  Tensor global_fuse(const std::vector<Tensor>& layer_embeddings) const;

  /// Fuses the whole-graph embedding with substructure embeddings through
  /// the local attention.
  Tensor local_fuse(const Tensor& graph_embedding,
                    const std::vector<Tensor>& substructure_embeddings) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const GinEncoder& encoder() const { return encoder_; }
  const BranchConfig& branch() const { return branch_; }

 private:
  BranchConfig branch_;
  ParamSet params_;
  GinEncoder encoder_;
  std::optional<Attention> global_attn_;
  std::optional<Attention> local_attn_;
};

}  // namespace fewgraph
