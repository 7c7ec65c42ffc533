#pragma once

#include <cstddef>
#include <vector>

#include "fewgraph/tensor.hpp"

namespace fewgraph {

/// Per-class mean of the support embeddings. Every class must contribute
/// the same number of embeddings.
std::vector<Tensor> class_centroids(const std::vector<std::vector<Tensor>>& support_by_class);

double squared_distance(const Tensor& a, const Tensor& b);

/// Squared-Euclidean distance from `query` to every centroid, in class order.
std::vector<double> centroid_distances(const Tensor& query,
                                       const std::vector<Tensor>& centroids);

/// Nearest-centroid class index; ties break toward the lowest index.
std::size_t predict_nearest(const Tensor& query, const std::vector<Tensor>& centroids);

/// Mean over queries of -log softmax_n(-d(c_n, h_q)) at the query's class.
/// Differentiable surrogate whose argmax matches predict_nearest.
Tensor episode_loss(const std::vector<Tensor>& query_embeddings,
                    const std::vector<std::size_t>& query_class_indices,
                    const std::vector<Tensor>& centroids);

/// Meta-test embedding transform: centering by the meta-train mean followed
/// by L2 scaling.
struct EmbeddingTransform {
  std::vector<double> mean;
  bool l2_scale = true;
};

EmbeddingTransform fit_transform(const std::vector<Tensor>& train_embeddings);

/// (h - mean) / ||h - mean||. A centered norm below 1e-12 is degenerate:
/// throws unless `epsilon_floor`, which clamps the denominator at 1e-12.
Tensor apply_transform(const Tensor& embedding, const EmbeddingTransform& transform,
                       bool epsilon_floor = false);

/// Distances of one query to the episode centroids under one branch.
struct BranchDistances {
  std::vector<int> episode_classes;  // class label per centroid position
  std::vector<double> distances;
};

/// Averages per-class distances across branches, then picks the argmin with
/// lowest-index tie-break. All branches must list the same classes in the
/// same order.
std::size_t ensemble_predict(const std::vector<BranchDistances>& branches);

}  // namespace fewgraph
