#include "fewgraph/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace fewgraph {

const char* attention_kind_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::LearnedWeight: return "learned";
    case AttentionKind::Vanilla: return "vanilla";
    case AttentionKind::SelfAttention: return "self";
    case AttentionKind::Mlp: return "mlp";
    case AttentionKind::Transformer: return "transformer";
  }
  return "?";
}

AttentionKind parse_attention_kind(const std::string& name) {
  if (name == "learned") return AttentionKind::LearnedWeight;
  if (name == "vanilla") return AttentionKind::Vanilla;
  if (name == "self") return AttentionKind::SelfAttention;
  if (name == "mlp") return AttentionKind::Mlp;
  if (name == "transformer") return AttentionKind::Transformer;
  throw std::invalid_argument("unknown attention kind: " + name);
}

const char* pooling_name(Pooling pooling) {
  switch (pooling) {
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
    case Pooling::First: return "first";
  }
  return "?";
}

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "max") return Pooling::Max;
  if (name == "first") return Pooling::First;
  throw std::invalid_argument("unknown pooling strategy: " + name);
}

void AttentionConfig::validate(std::size_t width) const {
  if (heads == 0) throw std::invalid_argument("attention: heads must be >= 1");
  if (layers == 0) throw std::invalid_argument("attention: layers must be >= 1");
  if (mlp_depth == 0) throw std::invalid_argument("attention: mlp depth must be >= 1");
  const bool multi_head =
      kind == AttentionKind::SelfAttention || kind == AttentionKind::Transformer;
  if (multi_head && width % heads != 0) {
    throw std::invalid_argument("attention: width " + std::to_string(width) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
}

Tensor pool(const std::vector<Tensor>& sequence, Pooling pooling) {
  if (sequence.empty()) throw std::invalid_argument("pool: empty sequence");
  switch (pooling) {
    case Pooling::First:
      return sequence.front();
    case Pooling::Mean: {
      Tensor acc = sequence.front();
      for (std::size_t i = 1; i < sequence.size(); ++i) acc = add(acc, sequence[i]);
      return scale(acc, 1.0 / static_cast<double>(sequence.size()));
    }
    case Pooling::Max: {
      // positionwise max via max(a, b) = a + relu(b - a)
      Tensor acc = sequence.front();
      for (std::size_t i = 1; i < sequence.size(); ++i) {
        acc = add(acc, relu(sub(sequence[i], acc)));
      }
      return acc;
    }
  }
  throw std::invalid_argument("pool: unknown strategy");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const std::size_t w = x.numel();
  const Tensor ones = Tensor::full({w}, 1.0);
  const Tensor mean = reduce_mean(x, 0);
  const Tensor centered = add(x, scale(ones, scale(mean, -1.0)));
  const Tensor variance = reduce_mean(mul(centered, centered), 0);
  const Tensor inv_std = exp(scale(log(add(variance, Tensor::scalar(1e-5))), -0.5));
  const Tensor normalized = scale(centered, inv_std);
  return add(mul(normalized, gamma), beta);
}

namespace {

Tensor dot(const Tensor& a, const Tensor& b) { return reduce_sum(mul(a, b)); }

}  // namespace

Attention::Attention(const AttentionConfig& cfg, std::size_t input_dim, std::size_t width,
                     std::size_t fixed_count, const std::string& name_prefix, ParamSet& params,
                     rng::Stream& init)
    : cfg_(cfg), input_dim_(input_dim), width_(width), fixed_count_(fixed_count) {
  cfg_.validate(width);
  if (input_dim == 0 || width == 0) {
    throw std::invalid_argument("attention: dimensions must be positive");
  }
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double w_bound = 1.0 / std::sqrt(static_cast<double>(width));

  switch (cfg_.kind) {
    case AttentionKind::LearnedWeight: {
      if (fixed_count == 0) {
        throw std::invalid_argument("attention: learned weights need a fixed input count");
      }
      // All-ones start so the untrained model reduces to plain concatenation.
      learned_ = params.add(name_prefix + ".weights", Tensor::full({fixed_count}, 1.0));
      break;
    }
    case AttentionKind::Vanilla: {
      vanilla_w_ = params.add(name_prefix + ".w", uniform_init({input_dim, width}, in_bound, init));
      vanilla_b_ = params.add(name_prefix + ".b", uniform_init({width}, in_bound, init));
      vanilla_c_ = params.add(name_prefix + ".c", uniform_init({width}, w_bound, init));
      break;
    }
    case AttentionKind::SelfAttention: {
      const std::size_t head_dim = width / cfg_.heads;
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::size_t d_in = l == 0 ? input_dim : width;
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        AttentionLayer layer;
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
          const std::string p =
              name_prefix + ".layer" + std::to_string(l) + ".head" + std::to_string(h);
          HeadParams head;
          head.wq = params.add(p + ".wq", uniform_init({d_in, head_dim}, bound, init));
          head.bq = params.add(p + ".bq", uniform_init({head_dim}, bound, init));
          head.wk = params.add(p + ".wk", uniform_init({d_in, head_dim}, bound, init));
          head.bk = params.add(p + ".bk", uniform_init({head_dim}, bound, init));
          head.wv = params.add(p + ".wv", uniform_init({d_in, head_dim}, bound, init));
          head.bv = params.add(p + ".bv", uniform_init({head_dim}, bound, init));
          layer.heads.push_back(head);
        }
        const std::string p = name_prefix + ".layer" + std::to_string(l);
        layer.wo = params.add(p + ".wo", uniform_init({width, width}, w_bound, init));
        layer.bo = params.add(p + ".bo", uniform_init({width}, w_bound, init));
        self_layers_.push_back(std::move(layer));
      }
      break;
    }
    case AttentionKind::Mlp: {
      if (fixed_count == 0) {
        throw std::invalid_argument("attention: mlp aggregation needs a fixed input count");
      }
      std::size_t d_in = fixed_count * input_dim;
      for (std::size_t d = 0; d < cfg_.mlp_depth; ++d) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        const std::string p = name_prefix + ".mlp" + std::to_string(d);
        Tensor w = params.add(p + ".weight", uniform_init({d_in, width}, bound, init));
        Tensor b = params.add(p + ".bias", uniform_init({width}, bound, init));
        mlp_.emplace_back(w, b);
        d_in = width;
      }
      break;
    }
    case AttentionKind::Transformer: {
      const std::size_t head_dim = width / cfg_.heads;
      const std::size_t ff_dim = 2 * width;
      in_proj_w_ = params.add(name_prefix + ".in.weight",
                              uniform_init({input_dim, width}, in_bound, init));
      in_proj_b_ = params.add(name_prefix + ".in.bias", uniform_init({width}, in_bound, init));
      const double ff_bound = 1.0 / std::sqrt(static_cast<double>(ff_dim));
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = name_prefix + ".layer" + std::to_string(l);
        TransformerLayer layer;
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
          const std::string hp = p + ".head" + std::to_string(h);
          HeadParams head;
          head.wq = params.add(hp + ".wq", uniform_init({width, head_dim}, w_bound, init));
          head.bq = params.add(hp + ".bq", uniform_init({head_dim}, w_bound, init));
          head.wk = params.add(hp + ".wk", uniform_init({width, head_dim}, w_bound, init));
          head.bk = params.add(hp + ".bk", uniform_init({head_dim}, w_bound, init));
          head.wv = params.add(hp + ".wv", uniform_init({width, head_dim}, w_bound, init));
          head.bv = params.add(hp + ".bv", uniform_init({head_dim}, w_bound, init));
          layer.attn.heads.push_back(head);
        }
        layer.attn.wo = params.add(p + ".wo", uniform_init({width, width}, w_bound, init));
        layer.attn.bo = params.add(p + ".bo", uniform_init({width}, w_bound, init));
        layer.ff1_w = params.add(p + ".ff1.weight", uniform_init({width, ff_dim}, w_bound, init));
        layer.ff1_b = params.add(p + ".ff1.bias", uniform_init({ff_dim}, w_bound, init));
        layer.ff2_w = params.add(p + ".ff2.weight", uniform_init({ff_dim, width}, ff_bound, init));
        layer.ff2_b = params.add(p + ".ff2.bias", uniform_init({width}, ff_bound, init));
        layer.ln1_gamma = params.add(p + ".ln1.gamma", Tensor::full({width}, 1.0));
        layer.ln1_beta = params.add(p + ".ln1.beta", Tensor::zeros({width}));
        layer.ln2_gamma = params.add(p + ".ln2.gamma", Tensor::full({width}, 1.0));
        layer.ln2_beta = params.add(p + ".ln2.beta", Tensor::zeros({width}));
        transformer_.push_back(std::move(layer));
      }
      break;
    }
  }
}

std::vector<Tensor> Attention::weights(const std::vector<Tensor>& inputs) const {
  if (inputs.empty()) throw std::invalid_argument("attention: empty input set");
  switch (cfg_.kind) {
    case AttentionKind::LearnedWeight: {
      if (inputs.size() != learned_.numel()) {
        throw std::invalid_argument("attention: learned weights hold " +
                                    std::to_string(learned_.numel()) + " entries, got " +
                                    std::to_string(inputs.size()) + " inputs");
      }
      std::vector<Tensor> out;
      out.reserve(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) out.push_back(gather_rows(learned_, {j}));
      return out;
    }
    case AttentionKind::Vanilla: {
      // e_j = c^T tanh(W h_j + b), weights = softmax(e)
      std::vector<Tensor> scores;
      scores.reserve(inputs.size());
      for (const Tensor& h : inputs) {
        scores.push_back(dot(vanilla_c_, tanh(affine(h, vanilla_w_, vanilla_b_))));
      }
      const Tensor w = softmax_rows(concat_last(scores));
      std::vector<Tensor> out;
      out.reserve(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) out.push_back(gather_rows(w, {j}));
      return out;
    }
    default:
      throw std::invalid_argument(std::string("attention kind ") +
                                  attention_kind_name(cfg_.kind) +
                                  " does not produce explicit weights");
  }
}

std::vector<Tensor> Attention::attend(const std::vector<Tensor>& positions,
                                      const AttentionLayer& layer,
                                      AttentionTrace* trace) const {
  const std::size_t count = positions.size();
  const std::size_t head_dim = width_ / cfg_.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> outputs;
  outputs.reserve(count);
  // Per-head projections of every position, computed once.
  std::vector<std::vector<Tensor>> q(cfg_.heads), k(cfg_.heads), v(cfg_.heads);
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    const HeadParams& head = layer.heads[h];
    for (const Tensor& x : positions) {
      q[h].push_back(affine(x, head.wq, head.bq));
      k[h].push_back(affine(x, head.wk, head.bk));
      v[h].push_back(affine(x, head.wv, head.bv));
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      std::vector<Tensor> scores;
      scores.reserve(count);
      for (std::size_t j = 0; j < count; ++j) {
        scores.push_back(scale(dot(q[h][i], k[h][j]), inv_sqrt_d));
      }
      const Tensor alpha = softmax_rows(concat_last(scores));
      if (trace) trace->rows.push_back(alpha);
      Tensor attended = scale(v[h][0], gather_rows(alpha, {std::size_t{0}}));
      for (std::size_t j = 1; j < count; ++j) {
        attended = add(attended, scale(v[h][j], gather_rows(alpha, {j})));
      }
      head_outputs.push_back(attended);
    }
    const Tensor merged = head_outputs.size() == 1 ? head_outputs[0] : concat_last(head_outputs);
    outputs.push_back(affine(merged, layer.wo, layer.bo));
  }
  return outputs;
}

Tensor Attention::aggregate(const std::vector<Tensor>& inputs, AttentionTrace* trace) const {
  if (inputs.empty()) throw std::invalid_argument("attention: empty input set");
  for (const Tensor& h : inputs) {
    if (h.rank() != 1 || h.numel() != input_dim_) {
      throw std::invalid_argument("attention: input has shape " + shape_str(h.shape()) +
                                  ", expected a vector of width " + std::to_string(input_dim_));
    }
  }
  switch (cfg_.kind) {
    case AttentionKind::SelfAttention: {
      std::vector<Tensor> positions = inputs;
      for (const AttentionLayer& layer : self_layers_) {
        positions = attend(positions, layer, trace);
      }
      return pool(positions, cfg_.pooling);
    }
    case AttentionKind::Mlp: {
      Tensor h = concat_last(std::span<const Tensor>(inputs.data(), inputs.size()));
      if (h.numel() != fixed_count_ * input_dim_) {
        throw std::invalid_argument("attention: mlp aggregation built for width " +
                                    std::to_string(fixed_count_ * input_dim_) + ", got " +
                                    std::to_string(h.numel()));
      }
      for (const auto& [w, b] : mlp_) h = relu(affine(h, w, b));
      return h;
    }
    case AttentionKind::Transformer: {
      std::vector<Tensor> positions;
      positions.reserve(inputs.size());
      for (const Tensor& x : inputs) positions.push_back(affine(x, in_proj_w_, in_proj_b_));
      for (const TransformerLayer& layer : transformer_) {
        const std::vector<Tensor> attended = attend(positions, layer.attn, trace);
        std::vector<Tensor> mid;
        mid.reserve(positions.size());
        for (std::size_t i = 0; i < positions.size(); ++i) {
          mid.push_back(layer_norm(add(positions[i], attended[i]), layer.ln1_gamma,
                                   layer.ln1_beta));
        }
        for (std::size_t i = 0; i < mid.size(); ++i) {
          const Tensor ff =
              affine(relu(affine(mid[i], layer.ff1_w, layer.ff1_b)), layer.ff2_w, layer.ff2_b);
          positions[i] = layer_norm(add(mid[i], ff), layer.ln2_gamma, layer.ln2_beta);
        }
      }
      return pool(positions, cfg_.pooling);
    }
    default:
      throw std::invalid_argument(std::string("attention kind ") +
                                  attention_kind_name(cfg_.kind) +
                                  " produces weights, not an aggregate");
  }
}

}  // namespace fewgraph
