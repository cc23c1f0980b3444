// Copyright 2026 The PIRL Authors
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

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "pirl/pirl.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> holdout;
  std::string mode;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_mode = true) {
  cmd->add_option("--config", flags.config_path,
                  "configuration file (key = value)");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "override master_seed");
  cmd->add_option("--holdout", flags.holdout, "override holdout env id");
  if (with_mode) {
    cmd->add_option("--mode", flags.mode,
                    "erm | adversarial_only | irm_only | full");
  }
}

pirl::ExperimentConfig resolve_config(const CommonFlags& flags) {
  pirl::ExperimentConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = pirl::parse_config_file(flags.config_path);
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed) cfg.master_seed = *flags.seed;
  if (flags.holdout) cfg.holdout = *flags.holdout;
  cfg.validate();
  return cfg;
}

void print_record(const pirl::RunRecord& r) {
  std::printf("%-24s id  auroc=%.4f auprc=%.4f brier=%.4f ece=%.4f\n",
              r.model.c_str(), r.id_metrics.auroc, r.id_metrics.auprc,
              r.id_metrics.brier, r.id_metrics.ece);
  std::printf("%-24s ood auroc=%.4f auprc=%.4f brier=%.4f ece=%.4f  "
              "leak=%.3f (chance %.3f)\n",
              r.model.c_str(), r.ood_metrics.auroc, r.ood_metrics.auprc,
              r.ood_metrics.brier, r.ood_metrics.ece,
              r.leakage.env_accuracy, r.leakage.chance_level);
}

int cmd_generate(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto suite = pirl::make_env_suite(pirl::suite_profile(cfg),
                                          cfg.master_seed);
  std::filesystem::create_directories(cfg.out_dir);
  for (const pirl::EnvSpec& spec : suite) {
    const pirl::Dataset ds = pirl::generate(spec, cfg.n_per_env);
    const std::string path = cfg.out_dir + "/env_" +
                             std::to_string(spec.env_id) + ".csv";
    pirl::write_csv(ds, path);
    std::printf("wrote %s (n=%zu, p=%zu, rho=%+.2f)\n", path.c_str(), ds.n,
                ds.p, spec.spurious_strength);
  }
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  auto cfg = resolve_config(flags);
  const std::string mode_name =
      flags.mode.empty() ? cfg.modes.front() : flags.mode;
  const pirl::TrainMode mode = pirl::train_mode_from_string(mode_name);
  const pirl::RunRecord record = pirl::execute_single_run(
      cfg, mode, cfg.lambda, cfg.gamma, 0, mode_name);
  print_record(record);
  std::printf("run dir: %s\n", record.run_dir.c_str());
  return 0;
}

int cmd_ablate(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto records = pirl::ablation_suite(cfg);
  for (const auto& r : records) print_record(r);
  pirl::render_tables(cfg.out_dir, cfg.out_dir + "/tables");
  std::printf("tables under %s/tables\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto records = pirl::hyper_sweep(cfg);
  for (const auto& r : records) print_record(r);
  pirl::render_tables(cfg.out_dir, cfg.out_dir + "/tables");
  return 0;
}

int cmd_report(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  pirl::render_tables(cfg.out_dir, cfg.out_dir + "/tables");
  std::printf("tables under %s/tables\n", cfg.out_dir.c_str());
  for (const char* name :
       {"table1_in_distribution.txt", "table2_held_out.txt",
        "table3_leakage.txt"}) {
    std::ifstream is(cfg.out_dir + "/tables/" + name);
    std::cout << "\n" << is.rdbuf();
  }
  return 0;
}

int cmd_probe(const CommonFlags& flags, const std::string& run_dir) {
  const auto cfg = resolve_config(flags);
  const std::string ckpt = run_dir + "/checkpoint.txt";
  const pirl::ModelParams params = pirl::load_checkpoint(ckpt);

  const std::uint64_t run_seed = pirl::mix_seed(cfg.master_seed, 0);
  const auto suite = pirl::make_env_suite(pirl::suite_profile(cfg), run_seed);
  const pirl::LoeoSplit split =
      pirl::loeo_split(suite, cfg.holdout, cfg.n_per_env);

  pirl::Dataset pooled;
  std::vector<int> env_class;
  pooled.p = split.train[0].p;
  for (std::size_t e = 0; e < split.train.size(); ++e) {
    const auto parts = pirl::split_rows(split.train[e], 1.0 - cfg.val_frac);
    pooled.x.insert(pooled.x.end(), parts.second.x.begin(),
                    parts.second.x.end());
    pooled.n += parts.second.n;
    env_class.insert(env_class.end(), parts.second.n, static_cast<int>(e));
  }
  pirl::Tape tape;
  pirl::Tensor h = pirl::encode(
      tape, params, pirl::Tensor::matrix(pooled.n, pooled.p, pooled.x));
  const pirl::LeakageReport rep = pirl::leakage_probe(
      h.value(), params.arch.embed_dim, env_class, cfg.probe_train_frac,
      pirl::mix_seed(run_seed, 0x908E));
  std::printf("leakage probe on %s\n", ckpt.c_str());
  std::printf("env_accuracy=%.4f chance=%.4f n=%zu\n", rep.env_accuracy,
              rep.chance_level, pooled.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"practice-invariant representation learning experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string probe_run_dir;

  CLI::App* generate =
      app.add_subcommand("generate", "export synthetic datasets to CSV");
  add_common(generate, flags, false);
  CLI::App* train = app.add_subcommand("train", "run a single training job");
  add_common(train, flags);
  CLI::App* ablate =
      app.add_subcommand("ablate", "run the four-mode ablation suite");
  add_common(ablate, flags, false);
  CLI::App* sweep =
      app.add_subcommand("sweep", "run the lambda/gamma grid (mode=full)");
  add_common(sweep, flags, false);
  CLI::App* report =
      app.add_subcommand("report", "render tables from a run directory");
  add_common(report, flags, false);
  CLI::App* probe = app.add_subcommand(
      "probe", "leakage probe on a stored checkpoint");
  add_common(probe, flags, false);
  probe->add_option("--run", probe_run_dir, "run directory with checkpoint.txt")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(flags);
    if (train->parsed()) return cmd_train(flags);
    if (ablate->parsed()) return cmd_ablate(flags);
    if (sweep->parsed()) return cmd_sweep(flags);
    if (report->parsed()) return cmd_report(flags);
    if (probe->parsed()) return cmd_probe(flags, probe_run_dir);
  } catch (const pirl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
