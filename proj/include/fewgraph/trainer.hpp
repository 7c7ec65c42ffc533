#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "fewgraph/fusion.hpp"
#include "fewgraph/graph.hpp"
#include "fewgraph/meta.hpp"

namespace fewgraph {

/// Full run configuration. Config files carry these as `key = value` lines,
/// one per key; CLI flags override file values.
struct RunConfig {
  std::string dataset;
  std::string variant = "base";  // base | g | l | full | ensemble
  std::string global_attn = "self";
  std::string local_attn = "self";
  std::size_t n_way = 3;
  std::size_t k_shot = 5;
  std::size_t q_queries = 15;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 5;
  std::vector<std::size_t> layers_used = {2, 3, 4, 5};
  double learning_rate = 0.001;
  std::size_t iterations = 700;
  std::size_t validate_every = 20;
  std::size_t eval_tasks = 500;
  std::size_t val_tasks = 50;
  std::size_t tasks_per_iteration = 1;
  std::uint64_t seed = 0;
  std::string pooling = "mean";
  std::size_t heads = 2;
  std::size_t attn_layers = 1;
  std::size_t mlp_depth = 2;
  std::size_t gin_mlp_layers = 2;
  double gin_eps = 0.0;
  bool learnable_eps = false;
  bool epsilon_floor = false;
  std::size_t degree_cap = 16;
  // Expected substructures per graph for the fixed-count local attention
  // kinds; train() refreshes it from the dataset.
  std::size_t substructure_count = 2;

  void validate() const;
  GinConfig gin() const;
  /// Branch configurations: one for base/g/l/full, the G and L branches for
  /// ensemble.
  std::vector<BranchConfig> branches() const;

  static RunConfig from_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
};

struct BranchSnapshot {
  std::vector<std::pair<std::string, Tensor>> parameters;
  EmbeddingTransform transform;
};

struct Checkpoint {
  int format_version = 1;
  RunConfig config;
  double best_val_accuracy = 0.0;
  std::string rng_state;
  std::vector<BranchSnapshot> branches;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the branch models of a checkpoint with its stored parameters.
std::vector<std::unique_ptr<GraphModel>> restore_models(const Checkpoint& checkpoint,
                                                        std::size_t feature_dim);

struct EvalReport {
  double mean_accuracy = 0.0;
  double stddev = 0.0;  // sample standard deviation across tasks
  double ci95 = 0.0;    // 1.96 * stddev / sqrt(tasks)
  std::size_t tasks = 0;
  std::vector<double> per_task;

  std::string to_json() const;
};

/// Adam with the usual (0.9, 0.999, 1e-8) moments.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamSet& params, double learning_rate);
  void step(const Gradients& grads);

 private:
  ParamSet& params_;
  double lr_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Episodic training with validation-based model selection. Each branch is
/// trained independently on its own deterministic episode stream; the
/// checkpoint holds the retained parameters and the meta-train mean computed
/// under them.
Checkpoint train(const RunConfig& config, std::ostream* log = nullptr,
                 std::vector<double>* loss_trace = nullptr);

/// Meta-test protocol: embeds the split once, applies the stored transform,
/// then scores `num_tasks` seeded episodes (averaged branch distances when
/// the checkpoint is an ensemble).
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<Graph>& split,
                    std::size_t num_tasks, std::uint64_t seed);

}  // namespace fewgraph
