#include "fewgraph/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "fewgraph/grad_check.hpp"
#include "fewgraph/graph.hpp"
#include "fewgraph/trainer.hpp"

namespace fewgraph {

namespace {

// Binds CLI flags to RunConfig keys so every value goes through the same
// parser (and error messages) as config files.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& desc) {
    options[key] = cmd->add_option(flag, values[key], desc);
  }

  void apply(RunConfig& cfg) const {
    for (const auto& [key, option] : options) {
      if (option->count() > 0) cfg.set(key, values.at(key));
    }
  }
};

void add_run_flags(CLI::App* cmd, ConfigFlags& flags) {
  flags.add(cmd, "--dataset", "dataset", "dataset file (JSON lines)");
  flags.add(cmd, "--variant", "variant", "model variant: base|g|l|full|ensemble");
  flags.add(cmd, "--global-attn", "global_attn",
            "global attention: learned|vanilla|self|mlp|transformer");
  flags.add(cmd, "--local-attn", "local_attn",
            "local attention: learned|vanilla|self|mlp|transformer");
  flags.add(cmd, "--n", "n", "episode way count");
  flags.add(cmd, "--k", "k", "support shots per class");
  flags.add(cmd, "--q", "q", "queries per class");
  flags.add(cmd, "--seed", "seed", "run seed");
  flags.add(cmd, "--pooling", "pooling", "sequence pooling: mean|max|first");
  flags.add(cmd, "--heads", "heads", "attention heads");
  flags.add(cmd, "--attn-layers", "attn_layers", "stacked attention layers");
  flags.add(cmd, "--mlp-depth", "mlp_depth", "depth of the MLP attention kind");
  flags.add(cmd, "--hidden-dim", "hidden_dim", "encoder hidden width");
  flags.add(cmd, "--num-layers", "num_layers", "GIN layers");
  flags.add(cmd, "--layers-used", "layers_used", "comma list of 1-indexed readout layers");
  flags.add(cmd, "--gin-mlp-layers", "gin_mlp_layers", "affine maps per GIN layer");
  flags.add(cmd, "--gin-eps", "gin_eps", "GIN epsilon");
  flags.add(cmd, "--learnable-eps", "learnable_eps", "learn GIN epsilon (true|false)");
  flags.add(cmd, "--lr", "learning_rate", "learning rate");
  flags.add(cmd, "--iterations", "iterations", "optimizer steps");
  flags.add(cmd, "--validate-every", "validate_every", "steps between validations");
  flags.add(cmd, "--val-tasks", "val_tasks", "episodes per validation");
  flags.add(cmd, "--eval-tasks", "eval_tasks", "episodes for final evaluation");
  flags.add(cmd, "--tasks-per-iteration", "tasks_per_iteration", "episodes per step");
  flags.add(cmd, "--epsilon-floor", "epsilon_floor",
            "clamp degenerate centered embeddings instead of failing (true|false)");
  flags.add(cmd, "--degree-cap", "degree_cap", "one-hot degree feature cap");
}

int run_generate(const TriangleGenConfig& cfg, const std::string& out_path) {
  const DatasetSplit split = generate_triangles_dataset(cfg);
  write_dataset(split, out_path);
  std::cout << "wrote " << (split.train.size() + split.validation.size() + split.test.size())
            << " graphs (" << DatasetSplit::classes(split.train).size() << " train / "
            << DatasetSplit::classes(split.test).size() << " test classes) to " << out_path
            << "\n";
  return 0;
}

const std::vector<Graph>& pick_split(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw std::invalid_argument("unknown split: " + name);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"few-shot graph classification with a structure-aware GIN encoder"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "generate a triangle-count dataset");
  TriangleGenConfig gen_cfg;
  gen_cfg.graphs_per_class = 50;
  std::string gen_out;
  gen->add_option("--classes", gen_cfg.num_classes, "triangle counts 1..classes")
      ->capture_default_str();
  gen->add_option("--per-class", gen_cfg.graphs_per_class, "graphs per class")
      ->capture_default_str();
  gen->add_option("--seed", gen_cfg.seed, "generator seed")->capture_default_str();
  gen->add_option("--node-min", gen_cfg.node_min, "minimum node count")->capture_default_str();
  gen->add_option("--node-max", gen_cfg.node_max, "maximum node count")->capture_default_str();
  gen->add_option("--edge-prob", gen_cfg.edge_prob, "edge probability")->capture_default_str();
  gen->add_option("--train-classes", gen_cfg.train_classes,
                  "classes assigned to the train split (0 = 60%)")
      ->capture_default_str();
  gen->add_option("--degree-cap", gen_cfg.degree_cap, "one-hot degree feature cap")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "episodic training with model selection");
  std::string train_config_path;
  std::string train_out = "checkpoint.json";
  bool train_quiet = false;
  train_cmd->add_option("--config", train_config_path, "key = value config file");
  train_cmd->add_option("--out", train_out, "checkpoint output path")->capture_default_str();
  train_cmd->add_flag("--quiet", train_quiet, "suppress per-validation progress lines");
  ConfigFlags train_flags;
  add_run_flags(train_cmd, train_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "meta-test evaluation of a checkpoint");
  std::string eval_checkpoint;
  std::string eval_dataset;
  std::string eval_split = "test";
  std::string eval_out;
  std::size_t eval_tasks = 0;
  std::uint64_t eval_seed = 0;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "dataset override (defaults to the one trained on)");
  eval_cmd->add_option("--split", eval_split, "train|validation|test")->capture_default_str();
  eval_cmd->add_option("--tasks", eval_tasks, "episode count (defaults to config eval_tasks)");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "write the full report as JSON");

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite");
  std::uint64_t grad_seed = 7;
  grad_cmd->add_option("--seed", grad_seed, "suite seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      return run_generate(gen_cfg, gen_out);
    }

    if (train_cmd->parsed()) {
      RunConfig cfg;
      if (!train_config_path.empty()) cfg = RunConfig::from_file(train_config_path);
      train_flags.apply(cfg);
      if (cfg.dataset.empty()) {
        throw std::invalid_argument("train: no dataset given (--dataset or config file)");
      }
      const Checkpoint checkpoint = train(cfg, train_quiet ? nullptr : &std::cout);
      save_checkpoint(checkpoint, train_out);
      std::cout << "best validation accuracy " << checkpoint.best_val_accuracy
                << ", checkpoint written to " << train_out << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const Checkpoint checkpoint = load_checkpoint(eval_checkpoint);
      const std::string dataset =
          eval_dataset.empty() ? checkpoint.config.dataset : eval_dataset;
      const DatasetSplit split = parse_dataset(dataset, checkpoint.config.degree_cap);
      const std::size_t tasks = eval_tasks == 0 ? checkpoint.config.eval_tasks : eval_tasks;
      const EvalReport report =
          evaluate(checkpoint, pick_split(split, eval_split), tasks, eval_seed);
      std::cout << "accuracy " << report.mean_accuracy << " +/- " << report.ci95 << " (std "
                << report.stddev << ", " << report.tasks << " tasks)\n";
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        if (!out) throw std::runtime_error("cannot open report file: " + eval_out);
        out << report.to_json();
      }
      return 0;
    }

    if (grad_cmd->parsed()) {
      const auto items = run_gradient_suite(grad_seed);
      double worst = 0.0;
      for (const auto& item : items) {
        const bool ok = item.max_rel_error < 1e-4;
        worst = std::max(worst, item.max_rel_error);
        std::cout << (ok ? "[pass] " : "[FAIL] ") << item.name << " max relative error "
                  << item.max_rel_error << "\n";
      }
      std::cout << "worst " << worst << "\n";
      return worst < 1e-4 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace fewgraph
