#include "fewgraph/graph.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace fewgraph {

void Graph::set_edge(std::size_t u, std::size_t v) {
  if (u >= num_nodes || v >= num_nodes) {
    throw std::invalid_argument("set_edge: node index out of range");
  }
  if (u == v) throw std::invalid_argument("set_edge: self-loops are not allowed");
  adjacency[u * num_nodes + v] = 1;
  adjacency[v * num_nodes + u] = 1;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (std::size_t u = 0; u < num_nodes; ++u) {
    for (std::size_t v = 0; v < num_nodes; ++v) deg[u] += adjacency[u * num_nodes + v];
  }
  return deg;
}

void Graph::validate() const {
  if (num_nodes == 0) throw std::invalid_argument("graph '" + id + "': num_nodes must be positive");
  if (adjacency.size() != num_nodes * num_nodes) {
    throw std::invalid_argument("graph '" + id + "': adjacency size mismatch");
  }
  for (std::size_t u = 0; u < num_nodes; ++u) {
    if (adjacency[u * num_nodes + u] != 0) {
      throw std::invalid_argument("graph '" + id + "': adjacency diagonal must be zero");
    }
    for (std::size_t v = 0; v < num_nodes; ++v) {
      const std::uint8_t x = adjacency[u * num_nodes + v];
      if (x != 0 && x != 1) {
        throw std::invalid_argument("graph '" + id + "': adjacency entries must be 0/1");
      }
      if (x != adjacency[v * num_nodes + u]) {
        throw std::invalid_argument("graph '" + id + "': adjacency must be symmetric");
      }
    }
  }
  if (feature_dim > 0 && features.size() != num_nodes * feature_dim) {
    throw std::invalid_argument("graph '" + id + "': feature matrix size mismatch");
  }
  for (const auto& sub : substructures) {
    if (sub.empty()) {
      throw std::invalid_argument("graph '" + id + "': empty substructure");
    }
    for (std::size_t idx : sub) {
      if (idx >= num_nodes) {
        throw std::invalid_argument("graph '" + id + "': substructure index " +
                                    std::to_string(idx) + " out of range");
      }
    }
  }
}

Graph make_graph(std::size_t num_nodes,
                 const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Graph g;
  g.num_nodes = num_nodes;
  g.adjacency.assign(num_nodes * num_nodes, 0);
  for (const auto& [u, v] : edges) g.set_edge(u, v);
  return g;
}

Graph induced_subgraph(const Graph& g, std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw std::invalid_argument("induced_subgraph: empty node set");
  std::vector<std::size_t> sorted(nodes.begin(), nodes.end());
  std::sort(sorted.begin(), sorted.end());
  Graph sub;
  sub.id = g.id + "#sub";
  sub.num_nodes = sorted.size();
  sub.label = g.label;
  sub.adjacency.assign(sub.num_nodes * sub.num_nodes, 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] >= g.num_nodes) {
      throw std::invalid_argument("induced_subgraph: node index out of range");
    }
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      if (g.edge(sorted[i], sorted[j])) {
        sub.adjacency[i * sub.num_nodes + j] = 1;
        sub.adjacency[j * sub.num_nodes + i] = 1;
      }
    }
  }
  sub.feature_dim = g.feature_dim;
  sub.features.resize(sub.num_nodes * g.feature_dim);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    std::copy(g.features.begin() + static_cast<std::ptrdiff_t>(sorted[i] * g.feature_dim),
              g.features.begin() + static_cast<std::ptrdiff_t>((sorted[i] + 1) * g.feature_dim),
              sub.features.begin() + static_cast<std::ptrdiff_t>(i * g.feature_dim));
  }
  return sub;
}

std::size_t count_triangles(const Graph& g) {
  // trace(A^3)/6 in integers: A2 = A*A, then sum_i (A2*A)_{ii}.
  const std::size_t m = g.num_nodes;
  std::vector<std::uint64_t> a2(m * m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      if (!g.adjacency[i * m + k]) continue;
      for (std::size_t j = 0; j < m; ++j) a2[i * m + j] += g.adjacency[k * m + j];
    }
  }
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      if (g.adjacency[i * m + k]) trace += a2[k * m + i];
    }
  }
  return static_cast<std::size_t>(trace / 6);
}

void assign_degree_features(Graph& g, std::size_t degree_cap) {
  if (degree_cap == 0) throw std::invalid_argument("degree cap must be positive");
  g.feature_dim = degree_cap;
  g.features.assign(g.num_nodes * degree_cap, 0.0);
  const auto deg = g.degrees();
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    const std::size_t bucket = std::min(deg[v], degree_cap - 1);
    g.features[v * degree_cap + bucket] = 1.0;
  }
  g.features_explicit = false;
}

std::array<std::vector<std::size_t>, 2> random_split_substructures(const Graph& g,
                                                                   std::uint64_t seed) {
  if (g.num_nodes < 2) {
    throw std::invalid_argument("random_split_substructures: graph '" + g.id +
                                "' needs at least 2 nodes");
  }
  rng::Stream stream(seed);
  std::vector<std::size_t> order(g.num_nodes);
  for (std::size_t i = 0; i < g.num_nodes; ++i) order[i] = i;
  stream.shuffle(order);
  const std::size_t cut = 1 + stream.below(g.num_nodes - 1);
  std::array<std::vector<std::size_t>, 2> parts;
  parts[0].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  parts[1].assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  std::sort(parts[0].begin(), parts[0].end());
  std::sort(parts[1].begin(), parts[1].end());
  return parts;
}

Tensor adjacency_tensor(const Graph& g) {
  std::vector<double> values(g.adjacency.begin(), g.adjacency.end());
  return Tensor::from_values({g.num_nodes, g.num_nodes}, std::move(values));
}

Tensor feature_tensor(const Graph& g) {
  if (g.feature_dim == 0) {
    throw std::invalid_argument("graph '" + g.id + "' has no features");
  }
  return Tensor::from_values({g.num_nodes, g.feature_dim}, g.features);
}

std::vector<int> DatasetSplit::classes(const std::vector<Graph>& graphs) {
  std::set<int> labels;
  for (const Graph& g : graphs) labels.insert(g.label);
  return {labels.begin(), labels.end()};
}

void DatasetSplit::validate() const {
  const auto tr = classes(train);
  const auto va = classes(validation);
  const auto te = classes(test);
  auto overlap = [](const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  };
  for (const auto& [name, pair] :
       {std::pair{std::string("train/validation"), overlap(tr, va)},
        std::pair{std::string("train/test"), overlap(tr, te)},
        std::pair{std::string("validation/test"), overlap(va, te)}}) {
    if (!pair.empty()) {
      throw std::invalid_argument("split class sets overlap (" + name + "), e.g. class " +
                                  std::to_string(pair.front()));
    }
  }
}

std::size_t DatasetSplit::feature_dim() const {
  std::size_t dim = 0;
  for (const auto* graphs : {&train, &validation, &test}) {
    for (const Graph& g : *graphs) {
      if (dim == 0) dim = g.feature_dim;
      if (g.feature_dim != dim) {
        throw std::invalid_argument("graph '" + g.id + "' has feature width " +
                                    std::to_string(g.feature_dim) + ", expected " +
                                    std::to_string(dim));
      }
    }
  }
  return dim;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void ensure_substructures(std::vector<Graph>& graphs) {
  for (Graph& g : graphs) {
    if (!g.substructures.empty()) continue;
    const auto parts = random_split_substructures(g, fnv1a(g.id));
    g.substructures = {parts[0], parts[1]};
  }
}

void ensure_substructures(DatasetSplit& split) {
  ensure_substructures(split.train);
  ensure_substructures(split.validation);
  ensure_substructures(split.test);
}

DatasetSplit generate_triangles_dataset(const TriangleGenConfig& cfg) {
  if (cfg.num_classes == 0 || cfg.num_classes > 10) {
    throw std::invalid_argument("generator: num_classes must be in [1, 10]");
  }
  if (cfg.graphs_per_class == 0) {
    throw std::invalid_argument("generator: graphs_per_class must be positive");
  }
  if (cfg.node_min < 3 || cfg.node_max < cfg.node_min) {
    throw std::invalid_argument("generator: node range must satisfy 3 <= min <= max");
  }
  if (!(cfg.edge_prob > 0.0 && cfg.edge_prob < 1.0)) {
    throw std::invalid_argument("generator: edge_prob must be in (0, 1)");
  }

  std::size_t train_count = cfg.train_classes;
  if (train_count == 0) {
    train_count = static_cast<std::size_t>(0.6 * static_cast<double>(cfg.num_classes) + 0.5);
    train_count = std::max<std::size_t>(1, train_count);
    if (cfg.num_classes > 1) train_count = std::min(train_count, cfg.num_classes - 1);
  }
  if (train_count > cfg.num_classes) {
    throw std::invalid_argument("generator: train_classes exceeds num_classes");
  }

  // Test classes are spread evenly across the label range (for 10 classes
  // and the default 6/4 split: {1, 4, 7, 10}). Grouping the largest counts
  // into the test split instead would make every test task an extrapolation
  // beyond the training label range.
  std::set<std::size_t> test_labels;
  const std::size_t test_count = cfg.num_classes - train_count;
  if (test_count == 1) {
    test_labels.insert(cfg.num_classes);
  } else if (test_count > 1) {
    for (std::size_t i = 0; i < test_count; ++i) {
      const double pos = 1.0 + static_cast<double>(i) *
                                   static_cast<double>(cfg.num_classes - 1) /
                                   static_cast<double>(test_count - 1);
      test_labels.insert(static_cast<std::size_t>(pos + 0.5));
    }
  }

  rng::Stream stream(cfg.seed);
  DatasetSplit split;
  for (std::size_t cls = 1; cls <= cfg.num_classes; ++cls) {
    std::size_t found = 0;
    std::size_t attempts = 0;
    while (found < cfg.graphs_per_class) {
      if (++attempts > cfg.attempt_budget) {
        throw std::runtime_error("generator: class " + std::to_string(cls) +
                                 " unreachable within " + std::to_string(cfg.attempt_budget) +
                                 " attempts");
      }
      const std::size_t n = cfg.node_min + stream.below(cfg.node_max - cfg.node_min + 1);
      Graph g;
      g.num_nodes = n;
      g.adjacency.assign(n * n, 0);
      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
          if (stream.uniform() < cfg.edge_prob) {
            g.adjacency[u * n + v] = 1;
            g.adjacency[v * n + u] = 1;
          }
        }
      }
      if (count_triangles(g) != cls) continue;
      g.label = static_cast<int>(cls);
      g.id = "tri" + std::to_string(cls) + "-" + std::to_string(found);
      assign_degree_features(g, cfg.degree_cap);
      (test_labels.count(cls) ? split.test : split.train).push_back(std::move(g));
      ++found;
    }
  }
  split.validate();
  return split;
}

SplitIndex::SplitIndex(const std::vector<Graph>& graphs) {
  labels = DatasetSplit::classes(graphs);
  by_class.resize(labels.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), graphs[i].label);
    by_class[static_cast<std::size_t>(it - labels.begin())].push_back(i);
  }
}

void check_episode_feasible(const std::vector<Graph>& graphs, std::size_t n_way,
                            std::size_t k_shot, std::size_t q_queries,
                            const std::string& what) {
  if (n_way == 0 || k_shot == 0 || q_queries == 0) {
    throw std::invalid_argument(what + ": N, K, Q must be positive");
  }
  const SplitIndex index(graphs);
  if (index.labels.size() < n_way) {
    throw std::invalid_argument(what + ": episode needs " + std::to_string(n_way) +
                                " classes, split has " + std::to_string(index.labels.size()));
  }
  const std::size_t need = k_shot + q_queries;
  for (std::size_t c = 0; c < index.labels.size(); ++c) {
    if (index.by_class[c].size() < need) {
      throw std::invalid_argument(what + ": class " + std::to_string(index.labels[c]) +
                                  " has " + std::to_string(index.by_class[c].size()) +
                                  " graphs, episode needs " + std::to_string(need));
    }
  }
}

EpisodeTask sample_episode(const SplitIndex& index, std::size_t n_way, std::size_t k_shot,
                           std::size_t q_queries, rng::Stream& stream) {
  if (index.labels.size() < n_way) {
    throw std::invalid_argument("sample_episode: episode needs " + std::to_string(n_way) +
                                " classes, split has " + std::to_string(index.labels.size()));
  }
  std::vector<std::size_t> class_positions(index.labels.size());
  for (std::size_t i = 0; i < class_positions.size(); ++i) class_positions[i] = i;
  stream.partial_shuffle(class_positions, n_way);

  EpisodeTask task;
  task.n_way = n_way;
  task.k_shot = k_shot;
  task.q_queries = q_queries;
  task.support.reserve(n_way * k_shot);
  task.query.reserve(n_way * q_queries);
  const std::size_t need = k_shot + q_queries;
  for (std::size_t c = 0; c < n_way; ++c) {
    const std::size_t pos = class_positions[c];
    const int label = index.labels[pos];
    std::vector<std::size_t> pool = index.by_class[pos];
    if (pool.size() < need) {
      throw std::invalid_argument("sample_episode: class " + std::to_string(label) + " has " +
                                  std::to_string(pool.size()) + " graphs, episode needs " +
                                  std::to_string(need));
    }
    stream.partial_shuffle(pool, need);
    for (std::size_t i = 0; i < k_shot; ++i) task.support.push_back(pool[i]);
    for (std::size_t i = 0; i < q_queries; ++i) task.query.push_back(pool[k_shot + i]);
    task.episode_classes.push_back(label);
    task.class_to_index[label] = c;
  }
  return task;
}

EpisodeTask sample_episode(const std::vector<Graph>& graphs, std::size_t n_way,
                           std::size_t k_shot, std::size_t q_queries, rng::Stream& stream) {
  return sample_episode(SplitIndex(graphs), n_way, k_shot, q_queries, stream);
}

}  // namespace fewgraph
