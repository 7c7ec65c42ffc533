#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "fewgraph/cli.hpp"
#include "fewgraph/trainer.hpp"
#include "test_support.hpp"

using namespace fewgraph;

namespace {

// Two perfectly separable classes: every graph of a class is a single node
// carrying the same one-hot feature.
void write_onehot_dataset(const std::filesystem::path& path, std::size_t classes,
                          std::size_t per_class, std::size_t dim,
                          std::size_t train_classes) {
  std::ostringstream out;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      out << R"({"id":"c)" << c << "-" << i << R"(","split":")"
          << (c < train_classes ? "train" : "test") << R"(","label":)" << c
          << R"(,"num_nodes":1,"edges":[],"features":[[)";
      for (std::size_t d = 0; d < dim; ++d) {
        if (d) out << ",";
        out << (d == c ? 1 : 0);
      }
      out << "]]}\n";
    }
  }
  test::write_file(path, out.str());
}

// Three train and three test classes whose graphs are drawn from one
// distribution regardless of the label, so no model beats chance.
void write_symmetric_dataset(const std::filesystem::path& path, std::size_t per_class) {
  rng::Stream stream(1234);
  std::ostringstream out;
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t n = 6 + stream.below(5);
      Graph g;
      g.num_nodes = n;
      g.adjacency.assign(n * n, 0);
      out << R"({"id":"s)" << c << "-" << i << R"(","split":")"
          << (c < 3 ? "train" : "test") << R"(","label":)" << c << R"(,"num_nodes":)" << n
          << R"(,"edges":[)";
      bool first = true;
      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
          if (stream.uniform() < 0.3) {
            if (!first) out << ",";
            out << "[" << u << "," << v << "]";
            first = false;
          }
        }
      }
      out << "]}\n";
    }
  }
  test::write_file(path, out.str());
}

RunConfig tiny_config(const std::filesystem::path& dataset) {
  RunConfig cfg;
  cfg.dataset = dataset.string();
  cfg.variant = "base";
  cfg.n_way = 2;
  cfg.k_shot = 1;
  cfg.q_queries = 1;
  cfg.hidden_dim = 4;
  cfg.num_layers = 1;
  cfg.layers_used = {1};
  cfg.iterations = 10;
  cfg.validate_every = 5;
  cfg.val_tasks = 4;
  cfg.eval_tasks = 8;
  cfg.degree_cap = 4;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("zero iterations leaves the initialization parameters in the checkpoint") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 4, 2, 4, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.iterations = 0;
  const Checkpoint checkpoint = train(cfg);

  // an identically seeded model is bitwise identical
  GraphModel reference(cfg.gin(), cfg.branches()[0], 4, rng::derive_seed(cfg.seed, 100));
  REQUIRE(checkpoint.branches.size() == 1);
  REQUIRE(checkpoint.branches[0].parameters.size() == reference.params().items.size());
  for (std::size_t p = 0; p < reference.params().items.size(); ++p) {
    CHECK(checkpoint.branches[0].parameters[p].first == reference.params().items[p].first);
    CHECK(test::bitwise_equal(checkpoint.branches[0].parameters[p].second,
                              reference.params().items[p].second));
  }
  CHECK(checkpoint.branches[0].transform.mean.size() == reference.embedding_dim());
}

TEST_CASE("fixed seeds reproduce checkpoints and loss traces exactly") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 4, 3, 4, 2);
  const RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  std::vector<double> trace_a, trace_b;
  const Checkpoint a = train(cfg, nullptr, &trace_a);
  const Checkpoint b = train(cfg, nullptr, &trace_b);
  CHECK(trace_a == trace_b);
  save_checkpoint(a, tmp.file("a.json"));
  save_checkpoint(b, tmp.file("b.json"));
  CHECK(test::read_file(tmp.file("a.json")) == test::read_file(tmp.file("b.json")));
}

TEST_CASE("training loss decreases monotonically on a separable toy set") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 2, 2, 2, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.hidden_dim = 2;
  cfg.iterations = 10;
  cfg.validate_every = 100;  // no validation inside the window
  std::vector<double> trace;
  train(cfg, nullptr, &trace);
  REQUIRE(trace.size() == 10);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    CHECK(trace[i] < trace[i - 1]);
  }
}

TEST_CASE("one-hot embeddings on a separable set evaluate at accuracy 1.0") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 6, 3, 6, 3);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.n_way = 3;
  cfg.hidden_dim = 6;
  cfg.gin_mlp_layers = 1;
  cfg.iterations = 0;
  Checkpoint checkpoint = train(cfg);

  // overwrite the single affine with the identity so each graph embeds to
  // its class one-hot, then refit the transform under those parameters
  for (auto& [name, tensor] : checkpoint.branches[0].parameters) {
    auto values = tensor.mutable_data();
    std::fill(values.begin(), values.end(), 0.0);
    if (name == "gin.layer1.mlp0.weight") {
      for (std::size_t i = 0; i < 6; ++i) values[i * 6 + i] = 1.0;
    }
  }
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const auto models = restore_models(checkpoint, 6);
  std::vector<Tensor> train_embeddings;
  for (const Graph& g : split.train) train_embeddings.push_back(models[0]->encode(g));
  checkpoint.branches[0].transform = fit_transform(train_embeddings);

  const EvalReport report = evaluate(checkpoint, split.test, 20, 5);
  CHECK(report.mean_accuracy == 1.0);
  CHECK(report.stddev == 0.0);
}

TEST_CASE("random parameters score at chance on a label-symmetric set") {
  test::TempDir tmp;
  write_symmetric_dataset(tmp.file("d.jsonl"), 30);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.n_way = 3;
  cfg.k_shot = 2;
  cfg.q_queries = 5;
  cfg.hidden_dim = 8;
  cfg.num_layers = 2;
  cfg.layers_used = {1, 2};
  cfg.degree_cap = 8;
  cfg.iterations = 0;
  const Checkpoint checkpoint = train(cfg);
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const EvalReport report = evaluate(checkpoint, split.test, 500, 11);
  const double sigma = report.stddev / std::sqrt(500.0);
  CHECK(std::abs(report.mean_accuracy - 1.0 / 3) < 3.0 * sigma + 0.02);
}

TEST_CASE("evaluation is deterministic for a fixed checkpoint and seed") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 5, 3, 5, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.hidden_dim = 5;
  const Checkpoint checkpoint = train(cfg);
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const EvalReport a = evaluate(checkpoint, split.test, 12, 9);
  const EvalReport b = evaluate(checkpoint, split.test, 12, 9);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("a checkpoint round trip preserves evaluation output bit for bit") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 5, 3, 5, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.hidden_dim = 5;
  const Checkpoint checkpoint = train(cfg);
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const EvalReport before = evaluate(checkpoint, split.test, 10, 4);
  save_checkpoint(checkpoint, tmp.file("ckpt.json"));
  const Checkpoint loaded = load_checkpoint(tmp.file("ckpt.json"));
  const EvalReport after = evaluate(loaded, split.test, 10, 4);
  CHECK(before.to_json() == after.to_json());
}

TEST_CASE("report statistics match an independent recomputation") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 5, 4, 5, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.hidden_dim = 5;
  cfg.iterations = 2;
  const Checkpoint checkpoint = train(cfg);
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const EvalReport report = evaluate(checkpoint, split.test, 25, 8);

  REQUIRE(report.per_task.size() == 25);
  double mean = 0.0;
  for (double a : report.per_task) mean += a;
  mean /= 25.0;
  double sq = 0.0;
  for (double a : report.per_task) sq += (a - mean) * (a - mean);
  const double stddev = std::sqrt(sq / 24.0);
  CHECK(std::abs(report.mean_accuracy - mean) < 1e-12);
  CHECK(std::abs(report.stddev - stddev) < 1e-12);
  CHECK(std::abs(report.ci95 - 1.96 * stddev / std::sqrt(25.0)) < 1e-12);
  CHECK(report.mean_accuracy >= 0.0);
  CHECK(report.mean_accuracy <= 1.0);
}

TEST_CASE("an exploding run aborts with the iteration number") {
  test::TempDir tmp;
  write_symmetric_dataset(tmp.file("d.jsonl"), 6);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.degree_cap = 8;
  cfg.learning_rate = 1e18;
  cfg.iterations = 50;
  try {
    train(cfg);
    FAIL("expected the run to abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("infeasible episode shapes fail before any training") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 4, 2, 4, 2);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.n_way = 3;  // only 2 train classes
  CHECK_THROWS_WITH_AS(train(cfg),
                       "train split: episode needs 3 classes, split has 2",
                       std::invalid_argument);
}

TEST_CASE("config files parse, override, and reject unknown keys") {
  test::TempDir tmp;
  test::write_file(tmp.file("run.cfg"),
                   "# comment\n"
                   "variant = g\n"
                   "n = 4\n"
                   "learning_rate = 0.01\n"
                   "layers_used = 1,3\n"
                   "pooling = max\n"
                   "learnable_eps = true\n");
  RunConfig cfg = RunConfig::from_file(tmp.file("run.cfg"));
  CHECK(cfg.variant == "g");
  CHECK(cfg.n_way == 4);
  CHECK(cfg.learning_rate == 0.01);
  CHECK(cfg.layers_used == std::vector<std::size_t>{1, 3});
  CHECK(cfg.pooling == "max");
  CHECK(cfg.learnable_eps);
  cfg.set("n", "7");  // CLI-style override
  CHECK(cfg.n_way == 7);
  CHECK_THROWS_AS(cfg.set("unknown_key", "1"), std::invalid_argument);

  test::write_file(tmp.file("bad.cfg"), "variant: g\n");
  CHECK_THROWS_AS(RunConfig::from_file(tmp.file("bad.cfg")), std::runtime_error);

  // the map form round-trips through set()
  RunConfig copy;
  copy.dataset = cfg.dataset;
  for (const auto& [key, value] : cfg.to_map()) copy.set(key, value);
  CHECK(copy.to_map() == cfg.to_map());
}

TEST_CASE("run config validation catches bad combinations") {
  RunConfig cfg;
  cfg.variant = "warp";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.variant = "g";
  cfg.heads = 3;  // 64 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.heads = 2;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cli: generate-data writes the contracted number of lines") {
  test::TempDir tmp;
  const std::string out = tmp.file("d.jsonl").string();
  const char* argv[] = {"fewgraph", "generate-data", "--classes", "4", "--per-class",
                        "30",       "--seed",        "1",        "--out", out.c_str()};
  CHECK(run_cli(10, argv) == 0);
  const std::string content = test::read_file(out);
  std::size_t lines = 0;
  for (char ch : content) lines += ch == '\n';
  CHECK(lines == 120);
}

TEST_CASE("cli: eval on a missing checkpoint fails without writing a report") {
  test::TempDir tmp;
  const std::string missing = tmp.file("nope.json").string();
  const std::string report = tmp.file("report.json").string();
  const char* argv[] = {"fewgraph", "eval", "--checkpoint", missing.c_str(),
                        "--out",    report.c_str()};
  CHECK(run_cli(6, argv) != 0);
  CHECK(!std::filesystem::exists(report));
}

TEST_CASE("cli: train then eval runs end to end") {
  test::TempDir tmp;
  write_onehot_dataset(tmp.file("d.jsonl"), 4, 3, 4, 2);
  test::write_file(tmp.file("run.cfg"),
                   "n = 2\nk = 1\nq = 1\nhidden_dim = 4\nnum_layers = 1\n"
                   "layers_used = 1\niterations = 6\nvalidate_every = 3\nval_tasks = 4\n"
                   "eval_tasks = 6\ndegree_cap = 4\n");
  const std::string cfg_path = tmp.file("run.cfg").string();
  const std::string data = tmp.file("d.jsonl").string();
  const std::string ckpt = tmp.file("ckpt.json").string();
  const std::string report = tmp.file("report.json").string();

  const char* train_argv[] = {"fewgraph", "train",   "--config", cfg_path.c_str(),
                              "--dataset", data.c_str(), "--seed",   "5",
                              "--out",     ckpt.c_str(), "--quiet"};
  REQUIRE(run_cli(11, train_argv) == 0);
  REQUIRE(std::filesystem::exists(ckpt));

  const char* eval_argv[] = {"fewgraph", "eval", "--checkpoint", ckpt.c_str(),
                             "--seed",   "2",    "--out",        report.c_str()};
  REQUIRE(run_cli(8, eval_argv) == 0);
  CHECK(std::filesystem::exists(report));
  const std::string body = test::read_file(report);
  CHECK(body.find("mean_accuracy") != std::string::npos);
  CHECK(body.find("per_task") != std::string::npos);
}

TEST_CASE("ensemble training produces two branches that evaluate together") {
  test::TempDir tmp;
  write_symmetric_dataset(tmp.file("d.jsonl"), 8);
  RunConfig cfg = tiny_config(tmp.file("d.jsonl"));
  cfg.variant = "ensemble";
  cfg.global_attn = "self";
  cfg.local_attn = "self";
  cfg.hidden_dim = 8;
  cfg.degree_cap = 8;
  cfg.iterations = 4;
  cfg.validate_every = 2;
  cfg.val_tasks = 3;
  const Checkpoint checkpoint = train(cfg);
  REQUIRE(checkpoint.branches.size() == 2);
  CHECK(checkpoint.config.substructure_count == 2);  // derived at train time

  test::TempDir out;
  save_checkpoint(checkpoint, out.file("e.json"));
  const Checkpoint loaded = load_checkpoint(out.file("e.json"));
  const DatasetSplit split = parse_dataset(cfg.dataset, cfg.degree_cap);
  const EvalReport a = evaluate(checkpoint, split.test, 15, 6);
  const EvalReport b = evaluate(loaded, split.test, 15, 6);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("cli: grad-check exits zero under the default tolerance") {
  const char* argv[] = {"fewgraph", "grad-check", "--seed", "7"};
  CHECK(run_cli(4, argv) == 0);
}

TEST_CASE("cli: unknown subcommands and flags exit non-zero") {
  const char* argv_bad_sub[] = {"fewgraph", "discombobulate"};
  CHECK(run_cli(2, argv_bad_sub) != 0);
  const char* argv_bad_flag[] = {"fewgraph", "grad-check", "--frobnicate"};
  CHECK(run_cli(3, argv_bad_flag) != 0);
}
