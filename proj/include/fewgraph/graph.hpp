#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fewgraph/rng.hpp"
#include "fewgraph/tensor.hpp"

namespace fewgraph {

/// Undirected graph: symmetric 0/1 adjacency with zero diagonal, node
/// feature matrix, class label, and optional substructure node subsets.
struct Graph {
  std::string id;
  std::size_t num_nodes = 0;
  std::vector<std::uint8_t> adjacency;  // num_nodes * num_nodes, row-major
  std::vector<double> features;         // num_nodes * feature_dim, row-major
  std::size_t feature_dim = 0;
  bool features_explicit = false;  // true when features came from the dataset file
  int label = 0;
  std::vector<std::vector<std::size_t>> substructures;

  bool edge(std::size_t u, std::size_t v) const { return adjacency[u * num_nodes + v] != 0; }
  void set_edge(std::size_t u, std::size_t v);
  std::vector<std::size_t> degrees() const;

  // Throws std::invalid_argument on any structural invariant violation.
  void validate() const;
};

Graph make_graph(std::size_t num_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// Subgraph induced by `nodes`: keeps all edges internal to the subset and
/// the corresponding feature rows. Node order follows ascending index.
Graph induced_subgraph(const Graph& g, std::span<const std::size_t> nodes);

/// Exact triangle count, trace(A^3)/6, in integer arithmetic.
std::size_t count_triangles(const Graph& g);

/// One-hot degree features with the degree clipped to cap-1; feature_dim
/// becomes cap. Used whenever a dataset file carries no features.
void assign_degree_features(Graph& g, std::size_t degree_cap);

/// Seeded random partition of the node set into two non-empty subsets; each
/// subset is returned sorted ascending.
std::array<std::vector<std::size_t>, 2> random_split_substructures(const Graph& g,
                                                                   std::uint64_t seed);

Tensor adjacency_tensor(const Graph& g);
Tensor feature_tensor(const Graph& g);

struct DatasetSplit {
  std::vector<Graph> train;
  std::vector<Graph> validation;
  std::vector<Graph> test;

  /// Sorted distinct labels of one collection.
  static std::vector<int> classes(const std::vector<Graph>& graphs);
  /// Throws if the train/validation/test class sets are not pairwise disjoint.
  void validate() const;
  /// Feature width shared by all graphs; throws if widths are mixed.
  std::size_t feature_dim() const;
};

/// Materializes a two-way random-split substructure pair on every graph that
/// has none. The split seed is derived from the graph id alone, so the same
/// file always yields the same substructures regardless of run seed.
void ensure_substructures(std::vector<Graph>& graphs);
void ensure_substructures(DatasetSplit& split);

struct TriangleGenConfig {
  std::size_t num_classes = 10;
  std::size_t graphs_per_class = 201;
  std::size_t node_min = 6;
  std::size_t node_max = 20;
  double edge_prob = 0.25;
  std::uint64_t seed = 0;
  std::size_t attempt_budget = 1000000;  // per class
  std::size_t train_classes = 0;         // 0: round(0.6 * num_classes)
  std::size_t degree_cap = 16;
};

/// Rejection-samples Erdos-Renyi graphs until every class c in
/// {1..num_classes} holds graphs_per_class graphs with exactly c triangles.
/// Labels equal the triangle count; lower classes go to the train split.
DatasetSplit generate_triangles_dataset(const TriangleGenConfig& cfg);

/// One N-way K-shot episode. Support/query hold indices into the sampled
/// collection, grouped by episode class: entry c*K+i (resp. c*Q+i) belongs
/// to episode class c.
struct EpisodeTask {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_queries = 0;
  std::vector<std::size_t> support;   // n_way * k_shot graph indices
  std::vector<std::size_t> query;     // n_way * q_queries graph indices
  std::vector<int> episode_classes;   // label per episode class index
  std::map<int, std::size_t> class_to_index;
};

/// Label inventory of one graph collection, kept in file order per class.
struct SplitIndex {
  explicit SplitIndex(const std::vector<Graph>& graphs);
  std::vector<int> labels;                           // sorted distinct
  std::vector<std::vector<std::size_t>> by_class;    // graph indices per label
};

/// Samples N distinct classes uniformly without replacement, then K+Q
/// distinct graphs per class (first K to support, next Q to query).
EpisodeTask sample_episode(const SplitIndex& index, std::size_t n_way, std::size_t k_shot,
                           std::size_t q_queries, rng::Stream& stream);
EpisodeTask sample_episode(const std::vector<Graph>& graphs, std::size_t n_way,
                           std::size_t k_shot, std::size_t q_queries, rng::Stream& stream);

/// Throws unless `graphs` can host (n_way, k_shot, q_queries) episodes.
void check_episode_feasible(const std::vector<Graph>& graphs, std::size_t n_way,
                            std::size_t k_shot, std::size_t q_queries, const std::string& what);

// Dataset file I/O: UTF-8 JSON Lines, one graph per line. Graphs without a
// "features" entry get one-hot degree features with the given cap.
DatasetSplit parse_dataset(const std::filesystem::path& path, std::size_t degree_cap = 16);
void write_dataset(const DatasetSplit& split, const std::filesystem::path& path);

}  // namespace fewgraph
