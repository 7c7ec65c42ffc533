#include <functional>

#include "fewgraph/attention.hpp"
#include "fewgraph/fusion.hpp"
#include "fewgraph/gin.hpp"
#include "fewgraph/grad_check.hpp"
#include "fewgraph/graph.hpp"
#include "fewgraph/meta.hpp"

namespace fewgraph {

namespace {

constexpr double kStep = 1e-5;
constexpr int kPoints = 10;

Tensor rand_tensor(Shape shape, rng::Stream& stream, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = stream.uniform(lo, hi);
  return t;
}

// Entries with |x| in [0.1, 2]: keeps kinked ops (relu, max) away from the
// finite-difference step.
Tensor rand_signed(Shape shape, rng::Stream& stream) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) {
    const double magnitude = stream.uniform(0.1, 2.0);
    v = stream.uniform() < 0.5 ? -magnitude : magnitude;
  }
  return t;
}

Tensor weighted_sum(const Tensor& x, const Tensor& w) { return reduce_sum(mul(x, w)); }

double max_over_points(std::uint64_t seed, std::uint64_t salt,
                       const std::function<double(rng::Stream&)>& one_point) {
  double worst = 0.0;
  for (int p = 0; p < kPoints; ++p) {
    rng::Stream stream = rng::Stream::substream(seed, salt * 1000 + static_cast<std::uint64_t>(p));
    worst = std::max(worst, one_point(stream));
  }
  return worst;
}

double check_primitive(std::uint64_t seed, std::uint64_t salt,
                       const std::function<double(rng::Stream&)>& one_point) {
  return max_over_points(seed, salt, one_point);
}

Graph random_er_graph(rng::Stream& stream, std::size_t node_min, std::size_t node_max,
                      double edge_prob, std::size_t degree_cap) {
  const std::size_t n = node_min + stream.below(node_max - node_min + 1);
  Graph g;
  g.id = "gradcheck";
  g.num_nodes = n;
  g.adjacency.assign(n * n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (stream.uniform() < edge_prob) {
        g.adjacency[u * n + v] = 1;
        g.adjacency[v * n + u] = 1;
      }
    }
  }
  assign_degree_features(g, degree_cap);
  return g;
}

std::vector<Tensor> param_leaves(ParamSet& params) {
  std::vector<Tensor> leaves;
  leaves.reserve(params.items.size());
  for (auto& [name, t] : params.items) leaves.push_back(t);
  return leaves;
}

double check_attention_kind(AttentionKind kind, std::uint64_t seed, std::uint64_t salt) {
  return max_over_points(seed, salt, [kind](rng::Stream& stream) {
    AttentionConfig cfg;
    cfg.kind = kind;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.mlp_depth = 2;
    cfg.pooling = Pooling::Mean;
    const std::size_t width = 8;
    const std::size_t count = 3;
    ParamSet params;
    Attention attention(cfg, width, width, count, "attn", params, stream);
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < count; ++i) {
      inputs.push_back(rand_signed({width}, stream).set_requires_grad(true));
    }
    std::vector<Tensor> leaves = param_leaves(params);
    leaves.insert(leaves.end(), inputs.begin(), inputs.end());
    Tensor w_out;
    if (attention.produces_weights()) {
      w_out = rand_tensor({count}, stream, -1.0, 1.0);
    } else {
      w_out = rand_tensor({width}, stream, -1.0, 1.0);
    }
    auto f = [&]() {
      if (attention.produces_weights()) {
        const std::vector<Tensor> weights = attention.weights(inputs);
        return weighted_sum(
            concat_last(std::span<const Tensor>(weights.data(), weights.size())), w_out);
      }
      return weighted_sum(attention.aggregate(inputs), w_out);
    };
    return grad_check(f, leaves, kStep);
  });
}

}  // namespace

std::vector<GradCheckItem> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckItem> items;
  auto push = [&items](std::string name, double err) {
    items.push_back({std::move(name), err});
  };

  push("primitive/matmul", check_primitive(seed, 1, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({4, 2}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 2}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b};
         return grad_check([&]() { return weighted_sum(matmul(a, b), w); }, leaves, kStep);
       }));
  push("primitive/matmul_vector", check_primitive(seed, 2, [](rng::Stream& s) {
         Tensor a = rand_tensor({4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({4, 3}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor c = rand_tensor({3}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w1 = rand_tensor({3}, s, -1.0, 1.0);
         const Tensor w2 = rand_tensor({4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b, c};
         // covers both 1D @ 2D and 2D @ 1D
         return grad_check(
             [&]() {
               return add(weighted_sum(matmul(a, b), w1), weighted_sum(matmul(b, c), w2));
             },
             leaves, kStep);
       }));
  push("primitive/add", check_primitive(seed, 3, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b};
         return grad_check([&]() { return weighted_sum(add(a, b), w); }, leaves, kStep);
       }));
  push("primitive/sub", check_primitive(seed, 4, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b};
         return grad_check([&]() { return weighted_sum(sub(a, b), w); }, leaves, kStep);
       }));
  push("primitive/mul", check_primitive(seed, 5, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b};
         return grad_check([&]() { return weighted_sum(mul(a, b), w); }, leaves, kStep);
       }));
  push("primitive/scale", check_primitive(seed, 6, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const double factor = s.uniform(0.5, 2.0);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(scale(a, factor), w); }, leaves, kStep);
       }));
  push("primitive/scale_scalar", check_primitive(seed, 7, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor f = rand_tensor({1}, s, 0.5, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, f};
         return grad_check([&]() { return weighted_sum(scale(a, f), w); }, leaves, kStep);
       }));
  push("primitive/relu", check_primitive(seed, 8, [](rng::Stream& s) {
         Tensor a = rand_signed({3, 4}, s).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(relu(a), w); }, leaves, kStep);
       }));
  push("primitive/tanh", check_primitive(seed, 9, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(tanh(a), w); }, leaves, kStep);
       }));
  push("primitive/exp", check_primitive(seed, 10, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(exp(a), w); }, leaves, kStep);
       }));
  push("primitive/log", check_primitive(seed, 11, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, 0.5, 2.5).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(log(a), w); }, leaves, kStep);
       }));
  push("primitive/softmax_rows", check_primitive(seed, 12, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(softmax_rows(a), w); }, leaves, kStep);
       }));
  push("primitive/concat_last", check_primitive(seed, 13, [](rng::Stream& s) {
         Tensor a = rand_tensor({2}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({3}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor c = rand_tensor({2, 2}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor d = rand_tensor({2, 3}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w1 = rand_tensor({5}, s, -1.0, 1.0);
         const Tensor w2 = rand_tensor({2, 5}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b, c, d};
         return grad_check(
             [&]() {
               return add(weighted_sum(concat_last({a, b}), w1),
                          weighted_sum(concat_last({c, d}), w2));
             },
             leaves, kStep);
       }));
  push("primitive/reduce_mean", check_primitive(seed, 14, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w0 = rand_tensor({4}, s, -1.0, 1.0);
         const Tensor w1 = rand_tensor({3}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check(
             [&]() {
               return add(weighted_sum(reduce_mean(a, 0), w0),
                          weighted_sum(reduce_mean(a, 1), w1));
             },
             leaves, kStep);
       }));
  push("primitive/reduce_max", check_primitive(seed, 15, [](rng::Stream& s) {
         Tensor a = rand_signed({3, 4}, s).set_requires_grad(true);
         const Tensor w0 = rand_tensor({4}, s, -1.0, 1.0);
         const Tensor w1 = rand_tensor({3}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check(
             [&]() {
               return add(weighted_sum(reduce_max(a, 0), w0),
                          weighted_sum(reduce_max(a, 1), w1));
             },
             leaves, kStep);
       }));
  push("primitive/reduce_sum", check_primitive(seed, 16, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const double w = s.uniform(0.5, 2.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return scale(reduce_sum(a), w); }, leaves, kStep);
       }));
  push("primitive/l2_norm", check_primitive(seed, 17, [](rng::Stream& s) {
         Tensor a = rand_signed({3, 4}, s).set_requires_grad(true);
         const double w = s.uniform(0.5, 2.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return scale(l2_norm(a), w); }, leaves, kStep);
       }));
  push("primitive/add_row", check_primitive(seed, 18, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor r = rand_tensor({4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({3, 4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, r};
         return grad_check([&]() { return weighted_sum(add_row(a, r), w); }, leaves, kStep);
       }));
  push("primitive/transpose", check_primitive(seed, 19, [](rng::Stream& s) {
         Tensor a = rand_tensor({3, 4}, s, -2.0, 2.0).set_requires_grad(true);
         const Tensor w = rand_tensor({4, 3}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a};
         return grad_check([&]() { return weighted_sum(transpose(a), w); }, leaves, kStep);
       }));
  push("primitive/gather_rows", check_primitive(seed, 20, [](rng::Stream& s) {
         Tensor a = rand_tensor({5, 3}, s, -2.0, 2.0).set_requires_grad(true);
         Tensor b = rand_tensor({5}, s, -2.0, 2.0).set_requires_grad(true);
         const std::vector<std::size_t> idx{0, 2, 2, 4};  // repeats test accumulation
         const Tensor w1 = rand_tensor({4, 3}, s, -1.0, 1.0);
         const Tensor w2 = rand_tensor({4}, s, -1.0, 1.0);
         std::vector<Tensor> leaves{a, b};
         return grad_check(
             [&]() {
               return add(weighted_sum(gather_rows(a, idx), w1),
                          weighted_sum(gather_rows(b, idx), w2));
             },
             leaves, kStep);
       }));

  push("attention/learned", check_attention_kind(AttentionKind::LearnedWeight, seed, 30));
  push("attention/vanilla", check_attention_kind(AttentionKind::Vanilla, seed, 31));
  push("attention/self", check_attention_kind(AttentionKind::SelfAttention, seed, 32));
  push("attention/mlp", check_attention_kind(AttentionKind::Mlp, seed, 33));
  push("attention/transformer", check_attention_kind(AttentionKind::Transformer, seed, 34));

  push("gin/layer_forward", max_over_points(seed, 40, [](rng::Stream& stream) {
         GinConfig cfg;
         cfg.num_layers = 1;
         cfg.hidden_dim = 6;
         cfg.mlp_layers = 2;
         cfg.layers_used = {1};
         ParamSet params;
         GinEncoder encoder(cfg, 5, params, stream);
         const Graph g = random_er_graph(stream, 5, 5, 0.4, 5);
         const Tensor adjacency = adjacency_tensor(g);
         Tensor nodes = rand_signed({5, 5}, stream).set_requires_grad(true);
         const Tensor w = rand_tensor({5, 6}, stream, -1.0, 1.0);
         std::vector<Tensor> leaves = param_leaves(params);
         leaves.push_back(nodes);
         return grad_check(
             [&]() { return weighted_sum(encoder.layer_forward(nodes, adjacency, 0), w); },
             leaves, kStep);
       }));

  push("model/episode_loss", max_over_points(seed, 50, [](rng::Stream& stream) {
         GinConfig gin;
         gin.num_layers = 2;
         gin.hidden_dim = 6;
         gin.mlp_layers = 2;
         gin.layers_used = {1, 2};
         BranchConfig branch;
         branch.variant = Variant::Base;
         GraphModel model(gin, branch, 4, stream.next());
         std::vector<Graph> graphs;
         for (int i = 0; i < 4; ++i) graphs.push_back(random_er_graph(stream, 4, 6, 0.4, 4));
         std::vector<Tensor> leaves = param_leaves(model.params());
         auto f = [&]() {
           std::vector<std::vector<Tensor>> support(2);
           support[0].push_back(model.encode(graphs[0]));
           support[1].push_back(model.encode(graphs[1]));
           const std::vector<Tensor> centroids = class_centroids(support);
           const std::vector<Tensor> queries{model.encode(graphs[2]), model.encode(graphs[3])};
           return episode_loss(queries, {0, 1}, centroids);
         };
         return grad_check(f, leaves, kStep);
       }));

  return items;
}

}  // namespace fewgraph
