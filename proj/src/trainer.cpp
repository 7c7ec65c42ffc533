#include "fewgraph/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fewgraph {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    return static_cast<std::size_t>(std::stoull(trim(value)));
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + value +
                                "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  return to_size(key, value);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(trim(value));
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + value +
                                "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + value +
                              "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_size(key, item));
  }
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

std::string double_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string size_list_str(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  if (n_way == 0 || k_shot == 0 || q_queries == 0) {
    throw std::invalid_argument("config: n, k, q must be positive");
  }
  if (validate_every == 0 || eval_tasks == 0 || val_tasks == 0 || tasks_per_iteration == 0) {
    throw std::invalid_argument("config: task and interval counts must be positive");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
  if (degree_cap == 0) throw std::invalid_argument("config: degree_cap must be positive");
  gin().validate();
  parse_pooling(pooling);
  // Builds every branch attention config, so illegal variant/attention
  // combinations fail here rather than mid-training.
  for (const BranchConfig& b : branches()) {
    if (b.needs_global()) b.global_attn.validate(hidden_dim);
    if (b.needs_local()) b.local_attn.validate(hidden_dim);
  }
}

GinConfig RunConfig::gin() const {
  GinConfig cfg;
  cfg.num_layers = num_layers;
  cfg.hidden_dim = hidden_dim;
  cfg.mlp_layers = gin_mlp_layers;
  cfg.eps = gin_eps;
  cfg.learnable_eps = learnable_eps;
  cfg.layers_used = layers_used;
  return cfg;
}

std::vector<BranchConfig> RunConfig::branches() const {
  AttentionConfig global_cfg;
  global_cfg.kind = parse_attention_kind(global_attn);
  global_cfg.heads = heads;
  global_cfg.layers = attn_layers;
  global_cfg.mlp_depth = mlp_depth;
  global_cfg.pooling = parse_pooling(pooling);
  AttentionConfig local_cfg = global_cfg;
  local_cfg.kind = parse_attention_kind(local_attn);

  auto make_branch = [&](Variant v) {
    BranchConfig b;
    b.variant = v;
    b.global_attn = global_cfg;
    b.local_attn = local_cfg;
    b.substructure_count = substructure_count;
    return b;
  };

  if (variant == "ensemble") {
    return {make_branch(Variant::Global), make_branch(Variant::Local)};
  }
  return {make_branch(parse_variant(variant))};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = trim(value);
  else if (key == "variant") variant = trim(value);
  else if (key == "global_attn") global_attn = trim(value);
  else if (key == "local_attn") local_attn = trim(value);
  else if (key == "n") n_way = to_size(key, value);
  else if (key == "k") k_shot = to_size(key, value);
  else if (key == "q") q_queries = to_size(key, value);
  else if (key == "hidden_dim") hidden_dim = to_size(key, value);
  else if (key == "num_layers") num_layers = to_size(key, value);
  else if (key == "layers_used") layers_used = to_size_list(key, value);
  else if (key == "learning_rate") learning_rate = to_double(key, value);
  else if (key == "iterations") iterations = to_size(key, value);
  else if (key == "validate_every") validate_every = to_size(key, value);
  else if (key == "eval_tasks") eval_tasks = to_size(key, value);
  else if (key == "val_tasks") val_tasks = to_size(key, value);
  else if (key == "tasks_per_iteration") tasks_per_iteration = to_size(key, value);
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "pooling") pooling = trim(value);
  else if (key == "heads") heads = to_size(key, value);
  else if (key == "attn_layers") attn_layers = to_size(key, value);
  else if (key == "mlp_depth") mlp_depth = to_size(key, value);
  else if (key == "gin_mlp_layers") gin_mlp_layers = to_size(key, value);
  else if (key == "gin_eps") gin_eps = to_double(key, value);
  else if (key == "learnable_eps") learnable_eps = to_bool(key, value);
  else if (key == "epsilon_floor") epsilon_floor = to_bool(key, value);
  else if (key == "degree_cap") degree_cap = to_size(key, value);
  else if (key == "substructure_count") substructure_count = to_size(key, value);
  else throw std::invalid_argument("unknown config key: " + key);
}

std::map<std::string, std::string> RunConfig::to_map() const {
  return {
      {"dataset", dataset},
      {"variant", variant},
      {"global_attn", global_attn},
      {"local_attn", local_attn},
      {"n", std::to_string(n_way)},
      {"k", std::to_string(k_shot)},
      {"q", std::to_string(q_queries)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"num_layers", std::to_string(num_layers)},
      {"layers_used", size_list_str(layers_used)},
      {"learning_rate", double_str(learning_rate)},
      {"iterations", std::to_string(iterations)},
      {"validate_every", std::to_string(validate_every)},
      {"eval_tasks", std::to_string(eval_tasks)},
      {"val_tasks", std::to_string(val_tasks)},
      {"tasks_per_iteration", std::to_string(tasks_per_iteration)},
      {"seed", std::to_string(seed)},
      {"pooling", pooling},
      {"heads", std::to_string(heads)},
      {"attn_layers", std::to_string(attn_layers)},
      {"mlp_depth", std::to_string(mlp_depth)},
      {"gin_mlp_layers", std::to_string(gin_mlp_layers)},
      {"gin_eps", double_str(gin_eps)},
      {"learnable_eps", learnable_eps ? "true" : "false"},
      {"epsilon_floor", epsilon_floor ? "true" : "false"},
      {"degree_cap", std::to_string(degree_cap)},
      {"substructure_count", std::to_string(substructure_count)},
  };
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value'");
    }
    try {
      cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

// ---- checkpoint I/O ----

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = checkpoint.format_version;
  ordered_json cfg;
  for (const auto& [k, v] : checkpoint.config.to_map()) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["best_val_accuracy"] = checkpoint.best_val_accuracy;
  j["rng_state"] = checkpoint.rng_state;
  ordered_json branches = ordered_json::array();
  for (const BranchSnapshot& b : checkpoint.branches) {
    ordered_json jb;
    ordered_json params = ordered_json::array();
    for (const auto& [name, tensor] : b.parameters) {
      ordered_json jp;
      jp["name"] = name;
      jp["shape"] = tensor.shape();
      jp["values"] = std::vector<double>(tensor.data().begin(), tensor.data().end());
      params.push_back(std::move(jp));
    }
    jb["parameters"] = std::move(params);
    jb["transform"] = {{"mean", b.transform.mean}, {"l2_scale", b.transform.l2_scale}};
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed checkpoint: " + std::string(e.what()));
  }
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  if (c.format_version != 1) {
    throw std::runtime_error("unsupported checkpoint format version " +
                             std::to_string(c.format_version));
  }
  for (const auto& [k, v] : j.at("config").items()) {
    c.config.set(k, v.get<std::string>());
  }
  c.best_val_accuracy = j.at("best_val_accuracy").get<double>();
  c.rng_state = j.at("rng_state").get<std::string>();
  for (const auto& jb : j.at("branches")) {
    BranchSnapshot b;
    for (const auto& jp : jb.at("parameters")) {
      const Shape shape = jp.at("shape").get<Shape>();
      auto values = jp.at("values").get<std::vector<double>>();
      b.parameters.emplace_back(jp.at("name").get<std::string>(),
                                Tensor::from_values(shape, std::move(values)));
    }
    b.transform.mean = jb.at("transform").at("mean").get<std::vector<double>>();
    b.transform.l2_scale = jb.at("transform").at("l2_scale").get<bool>();
    c.branches.push_back(std::move(b));
  }
  return c;
}

std::vector<std::unique_ptr<GraphModel>> restore_models(const Checkpoint& checkpoint,
                                                        std::size_t feature_dim) {
  const std::vector<BranchConfig> branch_cfgs = checkpoint.config.branches();
  if (branch_cfgs.size() != checkpoint.branches.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(checkpoint.branches.size()) +
                             " branches, config expects " + std::to_string(branch_cfgs.size()));
  }
  std::vector<std::unique_ptr<GraphModel>> models;
  for (std::size_t b = 0; b < branch_cfgs.size(); ++b) {
    auto model = std::make_unique<GraphModel>(checkpoint.config.gin(), branch_cfgs[b],
                                              feature_dim,
                                              rng::derive_seed(checkpoint.config.seed, 100 + b));
    const auto& stored = checkpoint.branches[b].parameters;
    if (stored.size() != model->params().items.size()) {
      throw std::runtime_error("checkpoint branch " + std::to_string(b) + " holds " +
                               std::to_string(stored.size()) + " parameters, model has " +
                               std::to_string(model->params().items.size()));
    }
    for (const auto& [name, tensor] : stored) {
      Tensor* p = model->params().find(name);
      if (p == nullptr) throw std::runtime_error("checkpoint parameter '" + name + "' unknown");
      if (p->shape() != tensor.shape()) {
        throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                 shape_str(tensor.shape()) + ", model expects " +
                                 shape_str(p->shape()));
      }
      std::copy(tensor.data().begin(), tensor.data().end(), p->mutable_data().begin());
    }
    models.push_back(std::move(model));
  }
  return models;
}

// ---- evaluation report ----

std::string EvalReport::to_json() const {
  ordered_json j;
  j["mean_accuracy"] = mean_accuracy;
  j["stddev"] = stddev;
  j["ci95"] = ci95;
  j["tasks"] = tasks;
  j["per_task"] = per_task;
  return j.dump(1) + "\n";
}

// ---- optimizer ----

AdamOptimizer::AdamOptimizer(ParamSet& params, double learning_rate)
    : params_(params), lr_(learning_rate) {
  m_.reserve(params.items.size());
  v_.reserve(params.items.size());
  for (const auto& [name, t] : params.items) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamOptimizer::step(const Gradients& grads) {
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.items.size(); ++p) {
    Tensor& param = params_.items[p].second;
    const Tensor g = grads.get(param);
    auto gv = g.data();
    auto pv = param.mutable_data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * gv[i];
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * gv[i] * gv[i];
      const double mhat = m_[p][i] / bias1;
      const double vhat = v_[p][i] / bias2;
      pv[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---- training ----

namespace {

std::vector<std::vector<double>> snapshot_values(const ParamSet& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.items.size());
  for (const auto& [name, t] : params.items) {
    out.emplace_back(t.data().begin(), t.data().end());
  }
  return out;
}

void restore_values(ParamSet& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(),
              params.items[i].second.mutable_data().begin());
  }
}

std::vector<Tensor> embed_all(const GraphModel& model, const std::vector<Graph>& graphs) {
  std::vector<Tensor> out;
  out.reserve(graphs.size());
  for (const Graph& g : graphs) out.push_back(model.encode(g));
  return out;
}

// Episode loss of one sampled task, with all embeddings on the active tape.
Tensor episode_task_loss(const GraphModel& model, const std::vector<Graph>& graphs,
                         const EpisodeTask& episode) {
  std::vector<std::vector<Tensor>> support_by_class(episode.n_way);
  for (std::size_t c = 0; c < episode.n_way; ++c) {
    for (std::size_t i = 0; i < episode.k_shot; ++i) {
      support_by_class[c].push_back(model.encode(graphs[episode.support[c * episode.k_shot + i]]));
    }
  }
  const std::vector<Tensor> centroids = class_centroids(support_by_class);
  std::vector<Tensor> query_embeddings;
  std::vector<std::size_t> query_labels;
  query_embeddings.reserve(episode.query.size());
  query_labels.reserve(episode.query.size());
  for (std::size_t c = 0; c < episode.n_way; ++c) {
    for (std::size_t i = 0; i < episode.q_queries; ++i) {
      query_embeddings.push_back(model.encode(graphs[episode.query[c * episode.q_queries + i]]));
      query_labels.push_back(c);
    }
  }
  return episode_loss(query_embeddings, query_labels, centroids);
}

// Meta-test style accuracy of the current parameters, used for model
// selection. The stream is re-derived per call, so every validation scores
// the same episode set.
double validate_branch(const GraphModel& model, const std::vector<Graph>& train_graphs,
                       const std::vector<Graph>& val_graphs, const RunConfig& cfg,
                       std::size_t branch_index) {
  const std::vector<Tensor> train_embeddings = embed_all(model, train_graphs);
  const EmbeddingTransform transform = fit_transform(train_embeddings);
  // When validating on train classes, reuse the embeddings behind the mean.
  const bool same_graphs = &val_graphs == &train_graphs;
  const std::vector<Tensor> source =
      same_graphs ? train_embeddings : embed_all(model, val_graphs);
  std::vector<Tensor> embeddings;
  embeddings.reserve(source.size());
  for (const Tensor& h : source) {
    embeddings.push_back(apply_transform(h, transform, cfg.epsilon_floor));
  }

  const SplitIndex index(val_graphs);
  rng::Stream stream = rng::Stream::substream(cfg.seed, 300 + branch_index);
  double total = 0.0;
  for (std::size_t t = 0; t < cfg.val_tasks; ++t) {
    const EpisodeTask episode =
        sample_episode(index, cfg.n_way, cfg.k_shot, cfg.q_queries, stream);
    std::vector<std::vector<Tensor>> support_by_class(episode.n_way);
    for (std::size_t c = 0; c < episode.n_way; ++c) {
      for (std::size_t i = 0; i < episode.k_shot; ++i) {
        support_by_class[c].push_back(embeddings[episode.support[c * episode.k_shot + i]]);
      }
    }
    const std::vector<Tensor> centroids = class_centroids(support_by_class);
    std::size_t correct = 0;
    for (std::size_t c = 0; c < episode.n_way; ++c) {
      for (std::size_t i = 0; i < episode.q_queries; ++i) {
        const Tensor& q = embeddings[episode.query[c * episode.q_queries + i]];
        if (predict_nearest(q, centroids) == c) ++correct;
      }
    }
    total += static_cast<double>(correct) /
             static_cast<double>(episode.n_way * episode.q_queries);
  }
  return total / static_cast<double>(cfg.val_tasks);
}

}  // namespace

Checkpoint train(const RunConfig& config, std::ostream* log, std::vector<double>* loss_trace) {
  RunConfig cfg = config;
  cfg.validate();
  DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);

  std::vector<BranchConfig> branch_cfgs = cfg.branches();
  const bool needs_local =
      std::any_of(branch_cfgs.begin(), branch_cfgs.end(),
                  [](const BranchConfig& b) { return b.needs_local(); });
  if (needs_local) {
    ensure_substructures(split);
    std::set<std::size_t> counts;
    for (const auto* graphs : {&split.train, &split.validation, &split.test}) {
      for (const Graph& g : *graphs) counts.insert(g.substructures.size());
    }
    if (counts.size() == 1) {
      cfg.substructure_count = *counts.begin();
    } else {
      // Mixed substructure counts only work for kinds that take any |H|.
      for (const BranchConfig& b : branch_cfgs) {
        if (!b.needs_local()) continue;
        const AttentionKind kind = b.local_attn.kind;
        if (kind == AttentionKind::LearnedWeight || kind == AttentionKind::Mlp) {
          throw std::invalid_argument(
              "local attention kind needs a uniform substructure count, dataset mixes them");
        }
      }
    }
    branch_cfgs = cfg.branches();
  }

  const std::size_t feature_dim = split.feature_dim();
  check_episode_feasible(split.train, cfg.n_way, cfg.k_shot, cfg.q_queries, "train split");
  const std::vector<Graph>& val_graphs =
      split.validation.empty() ? split.train : split.validation;
  check_episode_feasible(val_graphs, cfg.n_way, cfg.k_shot, cfg.q_queries,
                         split.validation.empty() ? "train split (validation episodes)"
                                                  : "validation split");

  Checkpoint checkpoint;
  checkpoint.config = cfg;
  checkpoint.best_val_accuracy = 0.0;

  const SplitIndex train_index(split.train);
  for (std::size_t b = 0; b < branch_cfgs.size(); ++b) {
    GraphModel model(cfg.gin(), branch_cfgs[b], feature_dim, rng::derive_seed(cfg.seed, 100 + b));
    AdamOptimizer adam(model.params(), cfg.learning_rate);
    rng::Stream episodes = rng::Stream::substream(cfg.seed, 200 + b);

    std::vector<std::vector<double>> best_values;
    double best_accuracy = -1.0;
    for (std::size_t step = 1; step <= cfg.iterations; ++step) {
      Tape tape;
      double loss_value = 0.0;
      Gradients grads;
      try {
        auto scope = tape.activate();
        std::vector<Tensor> task_losses;
        task_losses.reserve(cfg.tasks_per_iteration);
        for (std::size_t t = 0; t < cfg.tasks_per_iteration; ++t) {
          const EpisodeTask episode =
              sample_episode(train_index, cfg.n_way, cfg.k_shot, cfg.q_queries, episodes);
          task_losses.push_back(episode_task_loss(model, split.train, episode));
        }
        const Tensor loss =
            task_losses.size() == 1
                ? task_losses[0]
                : reduce_mean(concat_last(std::span<const Tensor>(task_losses.data(),
                                                                  task_losses.size())),
                              0);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("non-finite loss at iteration " + std::to_string(step));
        }
        grads = backward(tape, loss);
      } catch (const std::domain_error& e) {
        // log() of an underflowed probability: the loss left the finite range
        throw std::runtime_error("non-finite loss at iteration " + std::to_string(step) +
                                 " (" + e.what() + ")");
      }
      adam.step(grads);
      if (loss_trace) loss_trace->push_back(loss_value);

      if (step % cfg.validate_every == 0) {
        const double accuracy = validate_branch(model, split.train, val_graphs, cfg, b);
        if (accuracy > best_accuracy) {
          best_accuracy = accuracy;
          best_values = snapshot_values(model.params());
        }
        if (log) {
          (*log) << "branch " << b << " step " << step << " loss " << loss_value
                 << " val_accuracy " << accuracy << "\n";
        }
      }
    }

    if (!best_values.empty()) restore_values(model.params(), best_values);
    if (best_accuracy > checkpoint.best_val_accuracy) {
      checkpoint.best_val_accuracy = best_accuracy;
    }

    BranchSnapshot snapshot;
    snapshot.transform = fit_transform(embed_all(model, split.train));
    for (const auto& [name, tensor] : model.params().items) {
      snapshot.parameters.emplace_back(
          name, Tensor::from_values(tensor.shape(),
                                    {tensor.data().begin(), tensor.data().end()}));
    }
    checkpoint.branches.push_back(std::move(snapshot));
    checkpoint.rng_state = episodes.state();
  }
  return checkpoint;
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<Graph>& split,
                    std::size_t num_tasks, std::uint64_t seed) {
  if (num_tasks == 0) throw std::invalid_argument("evaluate: num_tasks must be positive");
  const RunConfig& cfg = checkpoint.config;
  std::vector<Graph> graphs = split;
  const std::vector<BranchConfig> branch_cfgs = cfg.branches();
  if (std::any_of(branch_cfgs.begin(), branch_cfgs.end(),
                  [](const BranchConfig& b) { return b.needs_local(); })) {
    ensure_substructures(graphs);
  }
  check_episode_feasible(graphs, cfg.n_way, cfg.k_shot, cfg.q_queries, "evaluation split");

  std::size_t feature_dim = 0;
  for (const Graph& g : graphs) {
    if (feature_dim == 0) feature_dim = g.feature_dim;
    if (g.feature_dim != feature_dim) {
      throw std::invalid_argument("evaluation split mixes feature widths");
    }
  }
  const auto models = restore_models(checkpoint, feature_dim);

  // Embeddings are episode-independent; transform once per branch.
  std::vector<std::vector<Tensor>> transformed(models.size());
  for (std::size_t b = 0; b < models.size(); ++b) {
    transformed[b].reserve(graphs.size());
    for (const Graph& g : graphs) {
      transformed[b].push_back(apply_transform(models[b]->encode(g),
                                               checkpoint.branches[b].transform,
                                               cfg.epsilon_floor));
    }
  }

  const SplitIndex index(graphs);
  EvalReport report;
  report.tasks = num_tasks;
  report.per_task.reserve(num_tasks);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    rng::Stream stream = rng::Stream::substream(seed, t);
    const EpisodeTask episode =
        sample_episode(index, cfg.n_way, cfg.k_shot, cfg.q_queries, stream);
    std::vector<std::vector<Tensor>> centroids(models.size());
    for (std::size_t b = 0; b < models.size(); ++b) {
      std::vector<std::vector<Tensor>> support_by_class(episode.n_way);
      for (std::size_t c = 0; c < episode.n_way; ++c) {
        for (std::size_t i = 0; i < episode.k_shot; ++i) {
          support_by_class[c].push_back(
              transformed[b][episode.support[c * episode.k_shot + i]]);
        }
      }
      centroids[b] = class_centroids(support_by_class);
    }
    std::size_t correct = 0;
    for (std::size_t c = 0; c < episode.n_way; ++c) {
      for (std::size_t i = 0; i < episode.q_queries; ++i) {
        const std::size_t graph_index = episode.query[c * episode.q_queries + i];
        std::size_t predicted = 0;
        if (models.size() == 1) {
          predicted = predict_nearest(transformed[0][graph_index], centroids[0]);
        } else {
          std::vector<BranchDistances> distances;
          distances.reserve(models.size());
          for (std::size_t b = 0; b < models.size(); ++b) {
            distances.push_back({episode.episode_classes,
                                 centroid_distances(transformed[b][graph_index], centroids[b])});
          }
          predicted = ensemble_predict(distances);
        }
        if (predicted == c) ++correct;
      }
    }
    report.per_task.push_back(static_cast<double>(correct) /
                              static_cast<double>(episode.n_way * episode.q_queries));
  }

  double sum = 0.0;
  for (double a : report.per_task) sum += a;
  report.mean_accuracy = sum / static_cast<double>(num_tasks);
  if (num_tasks > 1) {
    double sq = 0.0;
    for (double a : report.per_task) {
      const double d = a - report.mean_accuracy;
      sq += d * d;
    }
    report.stddev = std::sqrt(sq / static_cast<double>(num_tasks - 1));
  }
  report.ci95 = 1.96 * report.stddev / std::sqrt(static_cast<double>(num_tasks));
  return report;
}

}  // namespace fewgraph
