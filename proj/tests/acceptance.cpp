// Acceptance suite: one pass/fail line per criterion, non-zero exit when any
// criterion fails. Long-running criteria print their timings.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "fewgraph/fusion.hpp"
#include "fewgraph/grad_check.hpp"
#include "fewgraph/graph.hpp"
#include "fewgraph/meta.hpp"
#include "fewgraph/trainer.hpp"

using namespace fewgraph;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t brute_force_triangles(const Graph& g) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t j = i + 1; j < g.num_nodes; ++j) {
      if (!g.edge(i, j)) continue;
      for (std::size_t k = j + 1; k < g.num_nodes; ++k) {
        if (g.edge(i, k) && g.edge(j, k)) ++count;
      }
    }
  }
  return count;
}

Graph permuted(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out;
  out.id = g.id + "#p";
  out.num_nodes = g.num_nodes;
  out.label = g.label;
  out.feature_dim = g.feature_dim;
  out.adjacency.assign(g.num_nodes * g.num_nodes, 0);
  out.features.assign(g.features.size(), 0.0);
  for (std::size_t u = 0; u < g.num_nodes; ++u) {
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      out.adjacency[perm[u] * g.num_nodes + perm[v]] = g.adjacency[u * g.num_nodes + v];
    }
    for (std::size_t d = 0; d < g.feature_dim; ++d) {
      out.features[perm[u] * g.feature_dim + d] = g.features[u * g.feature_dim + d];
    }
  }
  for (const auto& sub : g.substructures) {
    std::vector<std::size_t> mapped;
    for (std::size_t v : sub) mapped.push_back(perm[v]);
    std::sort(mapped.begin(), mapped.end());
    out.substructures.push_back(std::move(mapped));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

// Shared desk-scale experiment: the generated benchmark plus the trained
// baseline, reused by the learning and directional criteria.
struct DeskScale {
  std::filesystem::path dataset_path;
  double base_accuracy = 0.0;
  double base_seconds = 0.0;
  bool ready = false;
};

DeskScale g_desk;

constexpr std::uint64_t kDatasetSeed = 64;
constexpr std::uint64_t kRunSeed = 7;
constexpr std::uint64_t kEvalSeed = 1;

RunConfig desk_config(const std::string& variant) {
  RunConfig cfg;
  cfg.dataset = g_desk.dataset_path.string();
  cfg.variant = variant;
  cfg.global_attn = "self";
  cfg.local_attn = "self";
  cfg.heads = 2;
  cfg.attn_layers = 1;
  cfg.pooling = "max";
  cfg.seed = kRunSeed;
  return cfg;  // everything else at defaults: 3-way 5-shot, 700 steps, lr 0.001
}

// ---- criteria ----

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto items = run_gradient_suite(7);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& item : items) {
    if (item.max_rel_error > worst) {
      worst = item.max_rel_error;
      worst_name = item.name;
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << items.size() << " checks, worst " << worst << " (" << worst_name << "), "
         << elapsed << "s";
  return {worst < 1e-4 && elapsed < 120.0, detail.str()};
}

Outcome triangle_oracle() {
  TriangleGenConfig cfg;
  cfg.num_classes = 10;
  cfg.graphs_per_class = 100;  // 1000 graphs total
  cfg.seed = 5050;
  const DatasetSplit split = generate_triangles_dataset(cfg);
  std::size_t checked = 0;
  for (const auto* graphs : {&split.train, &split.test}) {
    for (const Graph& g : *graphs) {
      const std::size_t brute = brute_force_triangles(g);
      if (static_cast<std::size_t>(g.label) != brute ||
          count_triangles(g) != brute) {
        return {false, "label mismatch on graph " + g.id};
      }
      ++checked;
    }
  }
  return {checked == 1000, std::to_string(checked) + " graphs, all labels exact"};
}

Outcome permutation_invariance() {
  TriangleGenConfig gen;
  gen.num_classes = 6;
  gen.graphs_per_class = 17;  // >= 100 graphs in train
  gen.seed = 444;
  gen.train_classes = 6;
  const DatasetSplit split = generate_triangles_dataset(gen);

  GinConfig gin;  // default-sized encoder
  BranchConfig base;
  base.variant = Variant::Base;
  BranchConfig global;
  global.variant = Variant::Global;
  global.global_attn.kind = AttentionKind::SelfAttention;
  global.global_attn.heads = 2;
  global.global_attn.layers = 1;
  const GraphModel base_model(gin, base, 16, 2024);
  const GraphModel global_model(gin, global, 16, 2024);

  rng::Stream stream(909);
  double worst = 0.0;
  for (std::size_t pair = 0; pair < 100; ++pair) {
    const Graph& g = split.train[pair % split.train.size()];
    std::vector<std::size_t> perm(g.num_nodes);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    stream.shuffle(perm);
    const Graph pg = permuted(g, perm);
    worst = std::max(worst, max_abs_diff(base_model.encode(g), base_model.encode(pg)));
    worst = std::max(worst, max_abs_diff(global_model.encode(g), global_model.encode(pg)));
  }
  std::ostringstream detail;
  detail << "100 pairs, worst deviation " << worst;
  return {worst < 1e-9, detail.str()};
}

Outcome prototype_math_oracle() {
  rng::Stream stream(321);
  double worst = 0.0;
  for (int episode = 0; episode < 20; ++episode) {
    const std::size_t n = 2 + stream.below(3);
    const std::size_t k = 1 + stream.below(4);
    const std::size_t q = 1 + stream.below(5);
    const std::size_t dim = 3 + stream.below(6);
    auto random_vec = [&]() {
      Tensor t = Tensor::zeros({dim});
      for (double& v : t.mutable_data()) v = stream.uniform(-2.0, 2.0);
      return t;
    };

    std::vector<std::vector<Tensor>> support(n);
    for (auto& members : support) {
      for (std::size_t i = 0; i < k; ++i) members.push_back(random_vec());
    }
    const std::vector<Tensor> centroids = class_centroids(support);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0.0;
        for (const Tensor& h : support[c]) mean += h.at(d);
        mean /= static_cast<double>(k);
        worst = std::max(worst, std::abs(centroids[c].at(d) - mean));
      }
    }

    std::vector<Tensor> queries;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n * q; ++i) {
      queries.push_back(random_vec());
      labels.push_back(stream.below(n));
    }

    // nearest centroid against a plain-loop argmin
    for (const Tensor& query : queries) {
      std::size_t expected = 0;
      double best = 1e300;
      for (std::size_t c = 0; c < n; ++c) {
        double dist = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = centroids[c].at(d) - query.at(d);
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          expected = c;
        }
      }
      if (predict_nearest(query, centroids) != expected) {
        return {false, "nearest-centroid mismatch"};
      }
    }

    // episode loss against a scalar softmax cross-entropy
    double expected_loss = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      std::vector<double> scores;
      for (std::size_t c = 0; c < n; ++c) {
        double dist = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = centroids[c].at(d) - queries[i].at(d);
          dist += diff * diff;
        }
        scores.push_back(-dist);
      }
      const double mx = *std::max_element(scores.begin(), scores.end());
      double denom = 0.0;
      for (double s : scores) denom += std::exp(s - mx);
      expected_loss += -(scores[labels[i]] - mx - std::log(denom));
    }
    expected_loss /= static_cast<double>(queries.size());
    const double loss = episode_loss(queries, labels, centroids).item();
    worst = std::max(worst, std::abs(loss - expected_loss));

    // ensemble averaging against a plain-loop recomputation
    std::vector<BranchDistances> branches;
    std::vector<int> classes;
    for (std::size_t c = 0; c < n; ++c) classes.push_back(static_cast<int>(c));
    for (int b = 0; b < 3; ++b) {
      BranchDistances bd;
      bd.episode_classes = classes;
      for (std::size_t c = 0; c < n; ++c) bd.distances.push_back(stream.uniform(0.0, 9.0));
      branches.push_back(std::move(bd));
    }
    std::size_t expected_pick = 0;
    double best_avg = 1e300;
    for (std::size_t c = 0; c < n; ++c) {
      double avg = 0.0;
      for (const auto& b : branches) avg += b.distances[c];
      avg /= 3.0;
      if (avg < best_avg) {
        best_avg = avg;
        expected_pick = c;
      }
    }
    if (ensemble_predict(branches) != expected_pick) {
      return {false, "ensemble averaging mismatch"};
    }
  }
  std::ostringstream detail;
  detail << "20 episodes, worst deviation " << worst;
  return {worst < 1e-9, detail.str()};
}

Outcome transform_laws() {
  TriangleGenConfig gen;
  gen.num_classes = 6;
  gen.graphs_per_class = 20;
  gen.seed = 777;
  gen.train_classes = 6;
  const DatasetSplit split = generate_triangles_dataset(gen);

  GinConfig gin;
  gin.num_layers = 3;
  gin.hidden_dim = 16;
  gin.layers_used = {2, 3};
  BranchConfig branch;
  branch.variant = Variant::Base;
  const GraphModel model(gin, branch, 16, 31337);

  std::vector<Tensor> embeddings;
  for (const Graph& g : split.train) embeddings.push_back(model.encode(g));
  const EmbeddingTransform transform = fit_transform(embeddings);

  EmbeddingTransform center_only = transform;
  center_only.l2_scale = false;
  std::vector<double> mean(model.embedding_dim(), 0.0);
  double worst_norm = 0.0;
  for (const Tensor& h : embeddings) {
    const Tensor centered = apply_transform(h, center_only);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += centered.at(d);
    const Tensor unit = apply_transform(h, transform);
    double norm = 0.0;
    for (std::size_t d = 0; d < unit.numel(); ++d) norm += unit.at(d) * unit.at(d);
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(norm) - 1.0));
  }
  double worst_mean = 0.0;
  for (double m : mean) {
    worst_mean = std::max(worst_mean, std::abs(m / static_cast<double>(embeddings.size())));
  }
  std::ostringstream detail;
  detail << embeddings.size() << " embeddings, centered mean " << worst_mean
         << ", norm deviation " << worst_norm;
  return {worst_mean < 1e-9 && worst_norm < 1e-9, detail.str()};
}

Outcome baseline_reduction() {
  TriangleGenConfig gen;
  gen.num_classes = 5;
  gen.graphs_per_class = 10;
  gen.seed = 888;
  gen.train_classes = 5;
  const DatasetSplit split = generate_triangles_dataset(gen);

  GinConfig gin;
  BranchConfig base;
  base.variant = Variant::Base;
  BranchConfig global;
  global.variant = Variant::Global;
  global.global_attn.kind = AttentionKind::LearnedWeight;
  const GraphModel base_model(gin, base, 16, 515);
  const GraphModel global_model(gin, global, 16, 515);

  for (const Graph& g : split.train) {
    const Tensor a = base_model.encode(g);
    const Tensor b = global_model.encode(g);
    if (a.shape() != b.shape() ||
        std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) != 0) {
      return {false, "embeddings differ on graph " + g.id};
    }
  }
  return {true, std::to_string(split.train.size()) + " graphs bitwise identical"};
}

Outcome desk_scale_learning() {
  TriangleGenConfig gen;
  gen.num_classes = 10;
  gen.graphs_per_class = 50;
  gen.seed = kDatasetSeed;
  const DatasetSplit split = generate_triangles_dataset(gen);
  g_desk.dataset_path = std::filesystem::temp_directory_path() /
                        ("fewgraph_acceptance_" + std::to_string(::getpid()) + ".jsonl");
  write_dataset(split, g_desk.dataset_path);

  const auto start = Clock::now();
  const Checkpoint checkpoint = train(desk_config("base"));
  const EvalReport report = evaluate(checkpoint, split.test, 500, kEvalSeed);
  g_desk.base_seconds = seconds_since(start);
  g_desk.base_accuracy = report.mean_accuracy;
  g_desk.ready = true;

  std::ostringstream detail;
  detail << "accuracy " << report.mean_accuracy << " +/- " << report.ci95 << " (chance 0.333), "
         << g_desk.base_seconds << "s";
  return {report.mean_accuracy >= 0.55 && g_desk.base_seconds < 600.0, detail.str()};
}

Outcome directional_structure() {
  if (!g_desk.ready) return {false, "baseline run unavailable"};
  const DatasetSplit split = parse_dataset(g_desk.dataset_path);

  const Checkpoint global_ckpt = train(desk_config("g"));
  const double global_acc = evaluate(global_ckpt, split.test, 500, kEvalSeed).mean_accuracy;
  const Checkpoint local_ckpt = train(desk_config("l"));
  const double local_acc = evaluate(local_ckpt, split.test, 500, kEvalSeed).mean_accuracy;

  const double better = std::max(global_acc, local_acc);
  std::ostringstream detail;
  detail << "global " << global_acc << ", local " << local_acc << ", baseline "
         << g_desk.base_accuracy;
  return {better >= g_desk.base_accuracy - 0.01, detail.str()};
}

Outcome ensemble_sanity() {
  TriangleGenConfig gen;
  gen.num_classes = 8;
  gen.graphs_per_class = 25;
  gen.seed = 2222;
  const DatasetSplit split = generate_triangles_dataset(gen);

  GinConfig gin;
  gin.num_layers = 3;
  gin.hidden_dim = 16;
  gin.layers_used = {2, 3};
  BranchConfig branch;
  branch.variant = Variant::Global;
  branch.global_attn.kind = AttentionKind::SelfAttention;
  // two independently constructed, identically seeded branch models
  const GraphModel branch_a(gin, branch, 16, 616);
  const GraphModel branch_b(gin, branch, 16, 616);

  auto transformed = [&](const GraphModel& model) {
    std::vector<Tensor> train_embeddings;
    for (const Graph& g : split.train) train_embeddings.push_back(model.encode(g));
    const EmbeddingTransform transform = fit_transform(train_embeddings);
    std::vector<Tensor> out;
    for (const Graph& g : split.test) out.push_back(apply_transform(model.encode(g), transform));
    return out;
  };
  const std::vector<Tensor> emb_a = transformed(branch_a);
  const std::vector<Tensor> emb_b = transformed(branch_b);

  const SplitIndex index(split.test);
  std::size_t compared = 0;
  for (std::size_t task = 0; task < 100; ++task) {
    rng::Stream stream = rng::Stream::substream(33, task);
    const EpisodeTask episode = sample_episode(index, 3, 5, 5, stream);
    std::vector<std::vector<Tensor>> sup_a(3), sup_b(3);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 5; ++i) {
        sup_a[c].push_back(emb_a[episode.support[c * 5 + i]]);
        sup_b[c].push_back(emb_b[episode.support[c * 5 + i]]);
      }
    }
    const std::vector<Tensor> cen_a = class_centroids(sup_a);
    const std::vector<Tensor> cen_b = class_centroids(sup_b);
    for (std::size_t qi = 0; qi < episode.query.size(); ++qi) {
      const std::size_t graph_index = episode.query[qi];
      const std::size_t single = predict_nearest(emb_a[graph_index], cen_a);
      const std::vector<BranchDistances> both{
          {episode.episode_classes, centroid_distances(emb_a[graph_index], cen_a)},
          {episode.episode_classes, centroid_distances(emb_b[graph_index], cen_b)}};
      if (ensemble_predict(both) != single) {
        return {false, "prediction diverged on task " + std::to_string(task)};
      }
      ++compared;
    }
  }
  return {true, std::to_string(compared) + " query predictions identical over 100 tasks"};
}

Outcome determinism() {
  TriangleGenConfig gen;
  gen.num_classes = 6;
  gen.graphs_per_class = 25;
  gen.seed = 31;
  const DatasetSplit split = generate_triangles_dataset(gen);
  const auto path = std::filesystem::temp_directory_path() /
                    ("fewgraph_acceptance_det_" + std::to_string(::getpid()) + ".jsonl");
  write_dataset(split, path);

  RunConfig cfg;
  cfg.dataset = path.string();
  cfg.variant = "base";
  cfg.n_way = 2;
  cfg.k_shot = 3;
  cfg.q_queries = 5;
  cfg.hidden_dim = 16;
  cfg.num_layers = 3;
  cfg.layers_used = {2, 3};
  cfg.iterations = 30;
  cfg.validate_every = 10;
  cfg.val_tasks = 10;
  cfg.seed = 12;

  auto run = [&]() {
    const Checkpoint checkpoint = train(cfg);
    const DatasetSplit data = parse_dataset(cfg.dataset, cfg.degree_cap);
    return evaluate(checkpoint, data.test, 60, 3).to_json();
  };
  const std::string first = run();
  const std::string second = run();
  std::filesystem::remove(path);
  if (first != second) return {false, "reports differ between runs"};
  return {true, "train + eval twice, byte-identical reports (" +
                    std::to_string(first.size()) + " bytes)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},
      {"triangle-oracle", triangle_oracle},
      {"permutation-invariance", permutation_invariance},
      {"prototype-math-oracle", prototype_math_oracle},
      {"transform-laws", transform_laws},
      {"baseline-reduction-identity", baseline_reduction},
      {"desk-scale-learning", desk_scale_learning},
      {"directional-structure", directional_structure},
      {"ensemble-sanity", ensemble_sanity},
      {"determinism", determinism},
  };

  int failures = 0;
  for (const auto& [name, criterion] : criteria) {
    Outcome outcome;
    try {
      outcome = criterion();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << name << " — " << outcome.detail
              << std::endl;
    failures += outcome.pass ? 0 : 1;
  }
  if (!g_desk.dataset_path.empty()) {
    std::error_code ec;
    std::filesystem::remove(g_desk.dataset_path, ec);
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
