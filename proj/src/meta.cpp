#include "fewgraph/meta.hpp"

#include <cmath>
#include <stdexcept>

namespace fewgraph {

std::vector<Tensor> class_centroids(const std::vector<std::vector<Tensor>>& support_by_class) {
  if (support_by_class.empty()) throw std::invalid_argument("class_centroids: no classes");
  const std::size_t k = support_by_class.front().size();
  if (k == 0) throw std::invalid_argument("class_centroids: empty support class");
  std::vector<Tensor> centroids;
  centroids.reserve(support_by_class.size());
  for (const auto& members : support_by_class) {
    if (members.size() != k) {
      throw std::invalid_argument("class_centroids: ragged class sizes (" +
                                  std::to_string(members.size()) + " vs " + std::to_string(k) +
                                  ")");
    }
    Tensor sum = members.front();
    for (std::size_t i = 1; i < members.size(); ++i) sum = add(sum, members[i]);
    centroids.push_back(scale(sum, 1.0 / static_cast<double>(k)));
  }
  return centroids;
}

double squared_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("squared_distance: shapes differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  double sum = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum;
}

std::vector<double> centroid_distances(const Tensor& query,
                                       const std::vector<Tensor>& centroids) {
  std::vector<double> out;
  out.reserve(centroids.size());
  for (const Tensor& c : centroids) out.push_back(squared_distance(c, query));
  return out;
}

std::size_t predict_nearest(const Tensor& query, const std::vector<Tensor>& centroids) {
  if (centroids.empty()) throw std::invalid_argument("predict_nearest: no centroids");
  std::size_t best = 0;
  double best_dist = squared_distance(centroids[0], query);
  for (std::size_t n = 1; n < centroids.size(); ++n) {
    const double d = squared_distance(centroids[n], query);
    if (d < best_dist) {
      best = n;
      best_dist = d;
    }
  }
  return best;
}

Tensor episode_loss(const std::vector<Tensor>& query_embeddings,
                    const std::vector<std::size_t>& query_class_indices,
                    const std::vector<Tensor>& centroids) {
  if (centroids.empty()) throw std::invalid_argument("episode_loss: no centroids");
  if (query_embeddings.empty()) throw std::invalid_argument("episode_loss: no queries");
  if (query_embeddings.size() != query_class_indices.size()) {
    throw std::invalid_argument("episode_loss: query/label count mismatch");
  }
  std::vector<Tensor> per_query;
  per_query.reserve(query_embeddings.size());
  for (std::size_t q = 0; q < query_embeddings.size(); ++q) {
    const std::size_t label = query_class_indices[q];
    if (label >= centroids.size()) {
      throw std::invalid_argument("episode_loss: query label " + std::to_string(label) +
                                  " outside the episode's " +
                                  std::to_string(centroids.size()) + " classes");
    }
    std::vector<Tensor> scores;
    scores.reserve(centroids.size());
    for (const Tensor& c : centroids) {
      const Tensor diff = sub(c, query_embeddings[q]);
      scores.push_back(scale(reduce_sum(mul(diff, diff)), -1.0));
    }
    const Tensor probs = softmax_rows(concat_last(scores));
    per_query.push_back(scale(log(gather_rows(probs, {label})), -1.0));
  }
  return reduce_mean(concat_last(std::span<const Tensor>(per_query.data(), per_query.size())),
                     0);
}

EmbeddingTransform fit_transform(const std::vector<Tensor>& train_embeddings) {
  if (train_embeddings.empty()) {
    throw std::invalid_argument("fit_transform: at least one embedding required");
  }
  const std::size_t dim = train_embeddings.front().numel();
  EmbeddingTransform t;
  t.mean.assign(dim, 0.0);
  for (const Tensor& h : train_embeddings) {
    if (h.numel() != dim) throw std::invalid_argument("fit_transform: mixed embedding widths");
    auto x = h.data();
    for (std::size_t i = 0; i < dim; ++i) t.mean[i] += x[i];
  }
  for (double& v : t.mean) v /= static_cast<double>(train_embeddings.size());
  return t;
}

Tensor apply_transform(const Tensor& embedding, const EmbeddingTransform& transform,
                       bool epsilon_floor) {
  if (embedding.numel() != transform.mean.size()) {
    throw std::invalid_argument("apply_transform: embedding width " +
                                std::to_string(embedding.numel()) + " does not match mean " +
                                std::to_string(transform.mean.size()));
  }
  std::vector<double> centered(transform.mean.size());
  auto x = embedding.data();
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < centered.size(); ++i) {
    centered[i] = x[i] - transform.mean[i];
    norm_sq += centered[i] * centered[i];
  }
  const std::size_t dim = centered.size();
  if (!transform.l2_scale) {
    return Tensor::from_values({dim}, std::move(centered));
  }
  double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) {
    if (!epsilon_floor) {
      throw std::runtime_error("apply_transform: degenerate embedding (centered norm " +
                               std::to_string(norm) + " < 1e-12)");
    }
    norm = 1e-12;
  }
  for (double& v : centered) v /= norm;
  return Tensor::from_values({dim}, std::move(centered));
}

std::size_t ensemble_predict(const std::vector<BranchDistances>& branches) {
  if (branches.empty()) throw std::invalid_argument("ensemble_predict: no branches");
  const auto& classes = branches.front().episode_classes;
  if (classes.empty()) throw std::invalid_argument("ensemble_predict: no classes");
  std::vector<double> avg(classes.size(), 0.0);
  for (const BranchDistances& b : branches) {
    if (b.episode_classes != classes) {
      throw std::invalid_argument("ensemble_predict: branch class orders differ");
    }
    if (b.distances.size() != classes.size()) {
      throw std::invalid_argument("ensemble_predict: distance count mismatch");
    }
    for (std::size_t n = 0; n < avg.size(); ++n) avg[n] += b.distances[n];
  }
  std::size_t best = 0;
  for (std::size_t n = 1; n < avg.size(); ++n) {
    if (avg[n] < avg[best]) best = n;
  }
  return best;
}

}  // namespace fewgraph
