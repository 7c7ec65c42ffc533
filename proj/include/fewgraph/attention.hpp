#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fewgraph/params.hpp"
#include "fewgraph/tensor.hpp"

namespace fewgraph {

enum class AttentionKind { LearnedWeight, Vanilla, SelfAttention, Mlp, Transformer };
enum class Pooling { Mean, Max, First };

const char* attention_kind_name(AttentionKind kind);
AttentionKind parse_attention_kind(const std::string& name);
const char* pooling_name(Pooling pooling);
Pooling parse_pooling(const std::string& name);

struct AttentionConfig {
  AttentionKind kind = AttentionKind::SelfAttention;
  std::size_t heads = 2;
  std::size_t layers = 1;     // stacked attention / transformer layers
  std::size_t mlp_depth = 2;  // Mlp kind
  Pooling pooling = Pooling::Mean;

  void validate(std::size_t width) const;
};

/// Pools a sequence of equally shaped vectors into one vector. Mean and max
/// are positionwise; first returns position 0.
Tensor pool(const std::vector<Tensor>& sequence, Pooling pooling);

/// Layer normalization of a vector (mean 0, variance 1, then gamma/beta),
/// built from autodiff primitives.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

/// Per-row attention weights captured during an aggregate() call, one entry
/// per (layer, head, position), each a softmax distribution over positions.
struct AttentionTrace {
  std::vector<Tensor> rows;
};

/// One of the five aggregation mechanisms over an ordered set of
/// representations. LearnedWeight and Vanilla produce explicit weights; the
/// other kinds absorb the weights into a single aggregated vector.
class Attention {
 public:
  /// `input_dim` is the width of each incoming representation, `width` the
  /// model width of the mechanism (and of aggregated outputs),
  /// `fixed_count` the expected |H| for the kinds whose parameter shapes
  /// depend on it (LearnedWeight, Mlp).
  Attention(const AttentionConfig& cfg, std::size_t input_dim, std::size_t width,
            std::size_t fixed_count, const std::string& name_prefix, ParamSet& params,
            rng::Stream& init);

  bool produces_weights() const {
    return cfg_.kind == AttentionKind::LearnedWeight || cfg_.kind == AttentionKind::Vanilla;
  }

  /// Weight per input (LearnedWeight: the raw parameters; Vanilla: softmax
  /// scores, positive and summing to 1).
  std::vector<Tensor> weights(const std::vector<Tensor>& inputs) const;

  /// Aggregated representation of width `width` (SelfAttention, Mlp,
  /// Transformer). `trace`, when given, collects attention rows.
  Tensor aggregate(const std::vector<Tensor>& inputs, AttentionTrace* trace = nullptr) const;

  const AttentionConfig& config() const { return cfg_; }
  std::size_t width() const { return width_; }

 private:
  struct HeadParams {
    Tensor wq, bq, wk, bk, wv, bv;
  };
  struct AttentionLayer {
    std::vector<HeadParams> heads;
    Tensor wo, bo;
  };
  struct TransformerLayer {
    AttentionLayer attn;
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  };

  std::vector<Tensor> attend(const std::vector<Tensor>& positions, const AttentionLayer& layer,
                             AttentionTrace* trace) const;

  AttentionConfig cfg_;
  std::size_t input_dim_ = 0;
  std::size_t width_ = 0;
  std::size_t fixed_count_ = 0;

  Tensor learned_;                                  // LearnedWeight
  Tensor vanilla_w_, vanilla_b_, vanilla_c_;        // Vanilla
  std::vector<AttentionLayer> self_layers_;         // SelfAttention
  std::vector<TransformerLayer> transformer_;       // Transformer
  Tensor in_proj_w_, in_proj_b_;                    // Transformer input projection
  std::vector<std::pair<Tensor, Tensor>> mlp_;      // Mlp affine stack
};

}  // namespace fewgraph
