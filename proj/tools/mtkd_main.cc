// Copyright 2026 The mtkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mtkd: command-line driver for the two-stage distillation pipeline.
//
//   mtkd gen-data  --config C [--out DIR] [--seed N]
//   mtkd extract   --config C [--tasks asr,at,sv]
//   mtkd pretrain  --config C [--resume CKPT]
//   mtkd finetune  --config C [--init CKPT] [--resume CKPT]
//   mtkd avg-ckpt  INPUT... [-k 10] --out FILE
//   mtkd eval      --config C --init CKPT [--tasks wer,map,eer,kd_l1] [--out FILE]
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mtkd/error.h"
#include "mtkd/pipeline.h"

namespace {

using namespace mtkd;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string init;
  std::string resume;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tasks;
  std::vector<std::string> inputs;
  std::size_t k = 10;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void print_stage(const StageResult& r) {
  std::cout << "checkpoints: " << r.checkpoints.size() << ", last " << r.checkpoints.back().string() << '\n';
  std::cout << "total loss: first " << r.first_losses.total << ", last " << r.last_losses.total << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-teacher distillation pipeline on synthetic speech corpora"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Override the output directory");
    cmd->add_option("--seed", o.seed, "Override the experiment seed");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate synthetic corpora and manifests");
  add_common(gen);

  CLI::App* extract = app.add_subcommand("extract", "Compute teacher labels for every corpus");
  add_common(extract);
  extract->add_option("--tasks", o.tasks, "Tasks to label (asr, at, sv)")->delimiter(',');

  CLI::App* pretrain = app.add_subcommand("pretrain", "Stage 1: multi-teacher distillation");
  add_common(pretrain);
  pretrain->add_option("--resume", o.resume, "Continue from a checkpoint of this stage");

  CLI::App* finetune = app.add_subcommand("finetune", "Stage 2: multi-task fine-tuning");
  add_common(finetune);
  finetune->add_option("--init", o.init, "Pre-trained checkpoint; omit to train from scratch");
  finetune->add_option("--resume", o.resume, "Continue from a checkpoint of this stage");

  CLI::App* avg = app.add_subcommand("avg-ckpt", "Average the last k checkpoints");
  avg->add_option("inputs", o.inputs, "Checkpoint files or directories")->required();
  avg->add_option("-k", o.k, "Number of checkpoints to average")->check(CLI::PositiveNumber);
  avg->add_option("--out", o.out, "Output checkpoint file")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out corpora");
  eval->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--init", o.init, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", o.tasks, "Metrics: wer, map, eer, kd_l1")->delimiter(',');
  eval->add_option("--out", o.out, "Also write the report to this file");
  eval->add_option("--seed", o.seed, "Override the experiment seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = load(o);
      cmd_gen_data(cfg);
      std::cout << "wrote " << cfg.corpora.size() << " corpora to " << (cfg.out_dir / "data").string() << '\n';
    } else if (*extract) {
      const ExperimentConfig cfg = load(o);
      std::set<Task> tasks;
      for (const std::string& t : o.tasks) tasks.insert(parse_task(t));
      const auto shards = cmd_extract(cfg, tasks);
      std::cout << "wrote " << shards.size() << " shards to " << (cfg.out_dir / "labels").string() << '\n';
    } else if (*pretrain) {
      print_stage(cmd_pretrain(load(o), optional_path(o.resume)));
    } else if (*finetune) {
      print_stage(cmd_finetune(load(o), optional_path(o.init), optional_path(o.resume)));
    } else if (*avg) {
      std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
      std::cout << "wrote " << cmd_avg(inputs, o.k, o.out).string() << '\n';
    } else if (*eval) {
      ExperimentConfig cfg = load_experiment_config(o.config);
      if (o.seed) cfg.set_seed(*o.seed);
      std::set<std::string> metrics(o.tasks.begin(), o.tasks.end());
      if (metrics.empty()) metrics = {"wer", "map", "eer"};
      const std::string report = cmd_eval(cfg, o.init, metrics).to_json().dump(2);
      std::cout << report << '\n';
      if (!o.out.empty()) {
        std::ofstream f(o.out);
        f << report << '\n';
        if (!f) throw DataError("cannot write " + o.out);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
