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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pirl/datagen.hpp"
#include "pirl/metrics.hpp"
#include "pirl/training.hpp"

namespace pirl {

/// Configuration problems (bad file, bad key, bad value, bad CLI usage).
/// The CLI maps these to exit code 1; every other failure exits 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key = value experiment configuration. Every field has a default;
/// unknown keys in a config file are hard errors so a typo cannot silently
/// fall back to a default.
struct ExperimentConfig {
  // Generator.
  int num_envs = 4;
  std::size_t n_per_env = 2000;
  std::size_t d_z = 8;
  std::size_t d_c = 8;
  int holdout = 3;
  double rho_train = 0.9;
  double rho_holdout = -0.9;
  double logit_scale = 30.0;
  double shift_spread = 1.2;
  double spurious_common_noise = 0.5;
  double missing_spread = 0.6;
  double obs_noise_base = 0.05;
  double obs_noise_step = 0.05;
  // Architecture.
  std::size_t embed_dim = 16;
  std::vector<std::size_t> encoder_hidden = {64, 32};
  std::vector<std::size_t> env_head_hidden = {32};
  std::string activation = "tanh";
  // Training.
  double lambda = 1.0;
  double gamma = 1.0;
  double ridge = 0.1;
  double lr_theta = 0.05;
  double lr_psi = 0.1;
  int epochs = 30;
  std::size_t batch_per_env = 64;
  int psi_steps = 3;
  double val_frac = 0.2;
  // Experiment.
  std::vector<std::string> modes = {"erm", "full"};
  int seeds = 10;
  std::uint64_t master_seed = 17;
  std::string out_dir = "runs";
  // Sweep grid (applies to mode=full).
  std::vector<double> sweep_lambda = {0.1, 1.0, 10.0};
  std::vector<double> sweep_gamma = {0.1, 1.0, 10.0};
  // Leakage probe.
  double probe_train_frac = 0.5;

  void validate() const {
    if (num_envs < 2) throw ConfigError("num_envs must be >= 2");
    if (holdout < 0 || holdout >= num_envs) {
      throw ConfigError("holdout must name an environment in [0, num_envs)");
    }
    if (n_per_env < 20) throw ConfigError("n_per_env must be >= 20");
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (val_frac <= 0.0 || val_frac >= 1.0) {
      throw ConfigError("val_frac must be in (0, 1)");
    }
    if (probe_train_frac <= 0.0 || probe_train_frac >= 1.0) {
      throw ConfigError("probe_train_frac must be in (0, 1)");
    }
    if (modes.empty()) throw ConfigError("modes must not be empty");
    for (const std::string& m : modes) {
      try {
        train_mode_from_string(m);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    try {
      activation_from_string(activation);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (sweep_lambda.empty() || sweep_gamma.empty()) {
      throw ConfigError("sweep grids must not be empty");
    }
  }
};

namespace harness_detail {

inline std::string fmt_g(double v, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

template <class T>
T parse_number(const std::string& raw);

template <>
inline double parse_number<double>(const std::string& raw) {
  std::size_t used = 0;
  const double v = std::stod(raw, &used);
  if (used != raw.size()) throw std::invalid_argument(raw);
  return v;
}

template <>
inline long long parse_number<long long>(const std::string& raw) {
  std::size_t used = 0;
  const long long v = std::stoll(raw, &used);
  if (used != raw.size()) throw std::invalid_argument(raw);
  return v;
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& raw) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(raw, &used);
  if (used != raw.size()) throw std::invalid_argument(raw);
  return v;
}

/// Key table shared by the parser and the snapshot writer so both stay in
/// sync and snapshots keep one canonical key order.
struct KeyBinding {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<KeyBinding>& config_keys() {
  static const std::vector<KeyBinding> keys = [] {
    std::vector<KeyBinding> k;
    const auto num = [](double v) { return fmt_g(v, "%g"); };

    const auto add_int = [&k](const std::string& name, auto member) {
      k.push_back({name,
                   [member](ExperimentConfig& c, const std::string& raw) {
                     c.*member = static_cast<std::decay_t<decltype(c.*member)>>(
                         parse_number<long long>(raw));
                   },
                   [member](const ExperimentConfig& c) {
                     return std::to_string(c.*member);
                   }});
    };
    const auto add_double = [&k, num](const std::string& name, auto member) {
      k.push_back({name,
                   [member](ExperimentConfig& c, const std::string& raw) {
                     c.*member = parse_number<double>(raw);
                   },
                   [member, num](const ExperimentConfig& c) {
                     return num(c.*member);
                   }});
    };

    add_int("num_envs", &ExperimentConfig::num_envs);
    add_int("n_per_env", &ExperimentConfig::n_per_env);
    add_int("d_z", &ExperimentConfig::d_z);
    add_int("d_c", &ExperimentConfig::d_c);
    add_int("holdout", &ExperimentConfig::holdout);
    add_double("rho_train", &ExperimentConfig::rho_train);
    add_double("rho_holdout", &ExperimentConfig::rho_holdout);
    add_double("logit_scale", &ExperimentConfig::logit_scale);
    add_double("shift_spread", &ExperimentConfig::shift_spread);
    add_double("spurious_common_noise",
               &ExperimentConfig::spurious_common_noise);
    add_double("missing_spread", &ExperimentConfig::missing_spread);
    add_double("obs_noise_base", &ExperimentConfig::obs_noise_base);
    add_double("obs_noise_step", &ExperimentConfig::obs_noise_step);
    add_int("embed_dim", &ExperimentConfig::embed_dim);
    k.push_back({"encoder_hidden",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.encoder_hidden.clear();
                   for (const std::string& tok : split(raw, ',')) {
                     c.encoder_hidden.push_back(static_cast<std::size_t>(
                         parse_number<long long>(tok)));
                   }
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (std::size_t w : c.encoder_hidden) {
                     out += (out.empty() ? "" : ",") + std::to_string(w);
                   }
                   return out;
                 }});
    k.push_back({"env_head_hidden",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.env_head_hidden.clear();
                   for (const std::string& tok : split(raw, ',')) {
                     c.env_head_hidden.push_back(static_cast<std::size_t>(
                         parse_number<long long>(tok)));
                   }
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (std::size_t w : c.env_head_hidden) {
                     out += (out.empty() ? "" : ",") + std::to_string(w);
                   }
                   return out;
                 }});
    k.push_back({"activation",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.activation = raw;
                 },
                 [](const ExperimentConfig& c) { return c.activation; }});
    add_double("lambda", &ExperimentConfig::lambda);
    add_double("gamma", &ExperimentConfig::gamma);
    add_double("ridge", &ExperimentConfig::ridge);
    add_double("lr_theta", &ExperimentConfig::lr_theta);
    add_double("lr_psi", &ExperimentConfig::lr_psi);
    add_int("epochs", &ExperimentConfig::epochs);
    add_int("batch_per_env", &ExperimentConfig::batch_per_env);
    add_int("psi_steps", &ExperimentConfig::psi_steps);
    add_double("val_frac", &ExperimentConfig::val_frac);
    k.push_back({"modes",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.modes = split(raw, ',');
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (const std::string& m : c.modes) {
                     out += (out.empty() ? "" : ",") + m;
                   }
                   return out;
                 }});
    add_int("seeds", &ExperimentConfig::seeds);
    k.push_back({"master_seed",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.master_seed = parse_number<std::uint64_t>(raw);
                 },
                 [](const ExperimentConfig& c) {
                   return std::to_string(c.master_seed);
                 }});
    k.push_back({"out_dir",
                 [](ExperimentConfig& c, const std::string& raw) {
                   c.out_dir = raw;
                 },
                 [](const ExperimentConfig& c) { return c.out_dir; }});
    const auto add_double_list = [&k, num](const std::string& name,
                                           auto member) {
      k.push_back({name,
                   [member](ExperimentConfig& c, const std::string& raw) {
                     (c.*member).clear();
                     for (const std::string& tok : split(raw, ',')) {
                       (c.*member).push_back(parse_number<double>(tok));
                     }
                   },
                   [member, num](const ExperimentConfig& c) {
                     std::string out;
                     for (double v : c.*member) {
                       out += (out.empty() ? "" : ",") + num(v);
                     }
                     return out;
                   }});
    };
    add_double_list("sweep_lambda", &ExperimentConfig::sweep_lambda);
    add_double_list("sweep_gamma", &ExperimentConfig::sweep_gamma);
    add_double("probe_train_frac", &ExperimentConfig::probe_train_frac);
    return k;
  }();
  return keys;
}

}  // namespace harness_detail

/// Parses the flat key = value format. '#' starts a comment, blank lines
/// are ignored, unknown keys and malformed values report their line.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = harness_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = harness_detail::trim(line.substr(0, eq));
    const std::string value = harness_detail::trim(line.substr(eq + 1));
    bool matched = false;
    for (const auto& binding : harness_detail::config_keys()) {
      if (binding.name != key) continue;
      matched = true;
      try {
        binding.set(cfg, value);
      } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": invalid value '" + value + "' for key '" + key +
                          "'");
      }
      break;
    }
    if (!matched) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw ConfigError("cannot read config file: " + path);
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return parse_config_text(buffer.str());
}

/// Canonical snapshot: every key in table order with its resolved value.
/// Reparsing a snapshot reproduces the configuration exactly.
inline void write_config_snapshot(const ExperimentConfig& cfg,
                                  std::ostream& os) {
  for (const auto& binding : harness_detail::config_keys()) {
    os << binding.name << " = " << binding.get(cfg) << "\n";
  }
}

/// One trained-and-evaluated run: metrics on the pooled training-env
/// evaluation split, on the held-out environment, and the leakage probe on
/// frozen training-env embeddings.
struct RunRecord {
  std::string model;
  int seed_index = 0;
  MetricsReport id_metrics;
  MetricsReport ood_metrics;
  LeakageReport leakage;
  std::string run_dir;
};

/// metrics.csv columns, in the documented order. env_acc appears on the
/// in_distribution row (the probe runs on training-env embeddings) and is
/// "na" on the held_out row.
inline void write_metrics_csv(const RunRecord& record, std::ostream& os) {
  using harness_detail::fmt_g;
  os << "model,split,auroc,auprc,brier,ece,env_acc\n";
  os << record.model << ",in_distribution," << fmt_g(record.id_metrics.auroc)
     << "," << fmt_g(record.id_metrics.auprc) << ","
     << fmt_g(record.id_metrics.brier) << "," << fmt_g(record.id_metrics.ece)
     << "," << fmt_g(record.leakage.env_accuracy) << "\n";
  os << record.model << ",held_out," << fmt_g(record.ood_metrics.auroc) << ","
     << fmt_g(record.ood_metrics.auprc) << ","
     << fmt_g(record.ood_metrics.brier) << "," << fmt_g(record.ood_metrics.ece)
     << ",na\n";
}

inline SuiteProfile suite_profile(const ExperimentConfig& cfg) {
  SuiteProfile profile;
  profile.num_envs = cfg.num_envs;
  profile.d_z = cfg.d_z;
  profile.d_c = cfg.d_c;
  profile.rho_train = cfg.rho_train;
  profile.rho_holdout = cfg.rho_holdout;
  profile.logit_scale = cfg.logit_scale;
  profile.shift_spread = cfg.shift_spread;
  profile.spurious_common_noise = cfg.spurious_common_noise;
  profile.missing_spread = cfg.missing_spread;
  profile.obs_noise_base = cfg.obs_noise_base;
  profile.obs_noise_step = cfg.obs_noise_step;
  return profile;
}

namespace harness_detail {

inline ArchConfig arch_from(const ExperimentConfig& cfg,
                            std::uint64_t run_seed) {
  ArchConfig arch;
  arch.input_dim = cfg.d_z + cfg.d_c;
  arch.embed_dim = cfg.embed_dim;
  arch.encoder_hidden = cfg.encoder_hidden;
  arch.env_head_hidden = cfg.env_head_hidden;
  arch.act = activation_from_string(cfg.activation);
  arch.init_seed = mix_seed(run_seed, 0xA2C4);
  return arch;
}

inline TrainConfig train_config_from(const ExperimentConfig& cfg,
                                     TrainMode mode, double lambda,
                                     double gamma, std::uint64_t run_seed) {
  TrainConfig tc;
  tc.lambda = lambda;
  tc.gamma = gamma;
  tc.ridge = cfg.ridge;
  tc.lr_theta = cfg.lr_theta;
  tc.lr_psi = cfg.lr_psi;
  tc.epochs = cfg.epochs;
  tc.batch_per_env = cfg.batch_per_env;
  tc.psi_steps_per_theta_step = cfg.psi_steps;
  tc.seed = mix_seed(run_seed, 0x7247);
  tc.mode = mode;
  tc.val_fraction = cfg.val_frac;
  return tc;
}

inline std::vector<double> pooled_eval_embeddings(const ModelParams& params,
                                                  const Dataset& pooled) {
  Tape tape;
  Tensor h = encode(tape, params, Tensor::matrix(pooled.n, pooled.p, pooled.x));
  return h.value();
}

}  // namespace harness_detail

/// Trains one (mode, seed) point and evaluates it. All randomness derives
/// from (master_seed, seed_index); the generated data depend only on the
/// seed, never on the mode, so ablations on the same seed share datasets
/// byte for byte. Persists config snapshot, history, checkpoint and
/// metrics under <out_dir>/<label>_seed<k>/ when persist is true.
inline RunRecord execute_single_run(const ExperimentConfig& cfg,
                                    TrainMode mode, double lambda,
                                    double gamma, int seed_index,
                                    const std::string& label,
                                    bool persist = true) {
  cfg.validate();
  const std::uint64_t run_seed =
      mix_seed(cfg.master_seed, static_cast<std::uint64_t>(seed_index));

  const auto suite = make_env_suite(suite_profile(cfg), run_seed);
  const LoeoSplit split = loeo_split(suite, cfg.holdout, cfg.n_per_env);

  const ArchConfig arch = harness_detail::arch_from(cfg, run_seed);
  const TrainConfig tc =
      harness_detail::train_config_from(cfg, mode, lambda, gamma, run_seed);
  TrainResult trained = train(arch, split, tc);

  // Pooled training-env evaluation rows: the same carve train() holds out.
  Dataset pooled_eval;
  std::vector<int> eval_env_class;
  pooled_eval.p = split.train[0].p;
  for (std::size_t e = 0; e < split.train.size(); ++e) {
    const auto parts = split_rows(split.train[e], 1.0 - cfg.val_frac);
    const Dataset& eval = parts.second;
    pooled_eval.x.insert(pooled_eval.x.end(), eval.x.begin(), eval.x.end());
    pooled_eval.y.insert(pooled_eval.y.end(), eval.y.begin(), eval.y.end());
    pooled_eval.n += eval.n;
    eval_env_class.insert(eval_env_class.end(), eval.n, static_cast<int>(e));
  }

  RunRecord record;
  record.model = label;
  record.seed_index = seed_index;
  record.id_metrics = evaluate_probs(predict_probs(trained.params, pooled_eval),
                                     pooled_eval.y, "in_distribution");
  record.ood_metrics =
      evaluate_probs(predict_probs(trained.params, split.holdout),
                     split.holdout.y, "held_out");
  record.leakage = leakage_probe(
      harness_detail::pooled_eval_embeddings(trained.params, pooled_eval),
      trained.params.arch.embed_dim, eval_env_class, cfg.probe_train_frac,
      mix_seed(run_seed, 0x908E));

  if (persist) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(cfg.out_dir) /
                         (label + "_seed" + std::to_string(seed_index));
    fs::create_directories(dir);
    record.run_dir = dir.string();
    {
      std::ofstream os(dir / "config.snapshot.txt");
      write_config_snapshot(cfg, os);
    }
    {
      std::ofstream os(dir / "history.csv");
      write_history_csv(trained.history, os);
    }
    save_checkpoint(trained.params, (dir / "checkpoint.txt").string());
    {
      std::ofstream os(dir / "metrics.csv");
      write_metrics_csv(record, os);
    }
    {
      std::ofstream os(dir / "meta.txt");
      os << "model = " << label << "\n";
      os << "seed_index = " << seed_index << "\n";
      os << "mode = " << to_string(mode) << "\n";
      os << "lambda = " << harness_detail::fmt_g(lambda, "%g") << "\n";
      os << "gamma = " << harness_detail::fmt_g(gamma, "%g") << "\n";
      os << "leakage_chance = "
         << harness_detail::fmt_g(record.leakage.chance_level) << "\n";
      os << "probe_seed = " << record.leakage.probe_seed << "\n";
      const std::time_t now = std::time(nullptr);
      os << "finished_unix = " << now << "\n";
    }
  }
  return record;
}

/// Reconstructs a RunRecord from its persisted files.
inline RunRecord load_run_record(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  std::ifstream meta(dir / "meta.txt");
  detail::require(meta.good(), "load_run_record: missing meta.txt in " +
                                   run_dir);
  RunRecord record;
  record.run_dir = run_dir;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = harness_detail::trim(line.substr(0, eq));
    const std::string value = harness_detail::trim(line.substr(eq + 1));
    if (key == "model") record.model = value;
    if (key == "seed_index") record.seed_index = std::stoi(value);
    if (key == "leakage_chance") record.leakage.chance_level = std::stod(value);
    if (key == "probe_seed") record.leakage.probe_seed = std::stoull(value);
  }

  std::ifstream csv(dir / "metrics.csv");
  detail::require(csv.good(), "load_run_record: missing metrics.csv in " +
                                  run_dir);
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    const auto cells = harness_detail::split(line, ',');
    detail::require(cells.size() == 7,
                    "load_run_record: malformed metrics row: " + line);
    MetricsReport rep;
    rep.split_label = cells[1];
    rep.auroc = std::stod(cells[2]);
    rep.auprc = std::stod(cells[3]);
    rep.brier = std::stod(cells[4]);
    rep.ece = std::stod(cells[5]);
    if (cells[1] == "in_distribution") {
      record.id_metrics = rep;
      if (cells[6] != "na") record.leakage.env_accuracy = std::stod(cells[6]);
    } else {
      record.ood_metrics = rep;
    }
  }
  return record;
}

/// Runs every configured mode for every seed. Lambda/gamma come from the
/// config; the mode decides which of them take effect. Writes per-run
/// directories plus a summary.csv, and returns the records in a fixed
/// (mode-major, seed-minor) order.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunRecord> records;
  for (const std::string& mode_name : cfg.modes) {
    const TrainMode mode = train_mode_from_string(mode_name);
    for (int s = 0; s < cfg.seeds; ++s) {
      records.push_back(execute_single_run(cfg, mode, cfg.lambda, cfg.gamma, s,
                                           mode_name));
    }
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream os(std::filesystem::path(cfg.out_dir) / "summary.csv");
  os << "model,seed,split,auroc,auprc,brier,ece,env_acc\n";
  using harness_detail::fmt_g;
  for (const RunRecord& r : records) {
    os << r.model << "," << r.seed_index << ",in_distribution,"
       << fmt_g(r.id_metrics.auroc) << "," << fmt_g(r.id_metrics.auprc) << ","
       << fmt_g(r.id_metrics.brier) << "," << fmt_g(r.id_metrics.ece) << ","
       << fmt_g(r.leakage.env_accuracy) << "\n";
    os << r.model << "," << r.seed_index << ",held_out,"
       << fmt_g(r.ood_metrics.auroc) << "," << fmt_g(r.ood_metrics.auprc)
       << "," << fmt_g(r.ood_metrics.brier) << "," << fmt_g(r.ood_metrics.ece)
       << ",na\n";
  }
  return records;
}

/// The four-mode ablation with shared data and seeds, so metric differences
/// isolate the objective terms.
inline std::vector<RunRecord> ablation_suite(const ExperimentConfig& cfg) {
  ExperimentConfig ablate = cfg;
  ablate.modes = {"erm", "adversarial_only", "irm_only", "full"};
  return run_experiment(ablate);
}

/// lambda x gamma grid on mode=full, every grid point over all seeds.
inline std::vector<RunRecord> hyper_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunRecord> records;
  for (double lam : cfg.sweep_lambda) {
    for (double gam : cfg.sweep_gamma) {
      const std::string label = "full_lam" + harness_detail::fmt_g(lam, "%g") +
                                "_gam" + harness_detail::fmt_g(gam, "%g");
      for (int s = 0; s < cfg.seeds; ++s) {
        records.push_back(execute_single_run(cfg, TrainMode::kFull, lam, gam,
                                             s, label));
      }
    }
  }
  return records;
}

namespace harness_detail {

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (a.n == 0) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

inline std::vector<std::string> ordered_models(
    const std::vector<RunRecord>& records) {
  static const std::vector<std::string> preferred = {
      "erm", "adversarial_only", "irm_only", "full"};
  std::vector<std::string> models;
  const auto seen = [&models](const std::string& m) {
    return std::find(models.begin(), models.end(), m) != models.end();
  };
  for (const std::string& m : preferred) {
    for (const RunRecord& r : records) {
      if (r.model == m && !seen(m)) models.push_back(m);
    }
  }
  std::vector<std::string> rest;
  for (const RunRecord& r : records) {
    if (!seen(r.model) &&
        std::find(rest.begin(), rest.end(), r.model) == rest.end()) {
      rest.push_back(r.model);
    }
  }
  std::sort(rest.begin(), rest.end());
  models.insert(models.end(), rest.begin(), rest.end());
  return models;
}

}  // namespace harness_detail

/// Renders the three report tables from persisted run records:
///   table1_in_distribution  -- discrimination/calibration on training envs
///   table2_held_out         -- the same on the held-out environment, with
///                              a holdout-AUROC delta against erm when
///                              erm runs are present
///   table3_leakage          -- environment-probe accuracy vs chance
/// Values are transcribed from the run records (means/stds across seeds),
/// never recomputed from predictions. CSV files carry full precision; the
/// .txt files are aligned for reading.
inline void render_tables(const std::string& run_root,
                          const std::string& table_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> run_dirs;
  detail::require(fs::exists(run_root),
                  "render_tables: no such directory: " + run_root);
  for (const auto& entry : fs::directory_iterator(run_root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv")) {
      run_dirs.push_back(entry.path().string());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  detail::require(!run_dirs.empty(),
                  "render_tables: no run records under " + run_root);

  std::vector<RunRecord> records;
  for (const std::string& dir : run_dirs) {
    records.push_back(load_run_record(dir));
  }
  const std::vector<std::string> models =
      harness_detail::ordered_models(records);

  const auto collect = [&records](const std::string& model, auto getter) {
    std::vector<double> out;
    for (const RunRecord& r : records) {
      if (r.model == model) out.push_back(getter(r));
    }
    return out;
  };

  fs::create_directories(table_dir);
  using harness_detail::aggregate;
  using harness_detail::fmt_g;

  const bool has_erm =
      std::find(models.begin(), models.end(), "erm") != models.end();
  const double erm_ood_auroc =
      has_erm ? aggregate(collect("erm", [](const RunRecord& r) {
                  return r.ood_metrics.auroc;
                })).mean
              : 0.0;

  // Table 1 and 2: one row per model, mean and std per metric.
  for (int table = 1; table <= 2; ++table) {
    const bool ood = (table == 2);
    const std::string base =
        std::string("table") + (ood ? "2_held_out" : "1_in_distribution");
    std::ofstream csv(fs::path(table_dir) / (base + ".csv"));
    std::ofstream txt(fs::path(table_dir) / (base + ".txt"));
    csv << "model,auroc_mean,auroc_std,auprc_mean,auprc_std,brier_mean,"
           "brier_std,ece_mean,ece_std";
    if (ood && has_erm) csv << ",delta_auroc_vs_erm";
    csv << "\n";
    txt << (ood ? "Held-out environment performance\n"
                : "In-distribution performance (training environments)\n");
    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %8s %8s %8s %8s", "model",
                  "AUROC", "AUPRC", "Brier", "ECE");
    txt << line << (ood && has_erm ? "  dAUROC" : "") << "\n";
    for (const std::string& model : models) {
      const auto metric = [&](auto getter) {
        return aggregate(collect(model, getter));
      };
      const auto au = metric([ood](const RunRecord& r) {
        return ood ? r.ood_metrics.auroc : r.id_metrics.auroc;
      });
      const auto ap = metric([ood](const RunRecord& r) {
        return ood ? r.ood_metrics.auprc : r.id_metrics.auprc;
      });
      const auto br = metric([ood](const RunRecord& r) {
        return ood ? r.ood_metrics.brier : r.id_metrics.brier;
      });
      const auto ec = metric([ood](const RunRecord& r) {
        return ood ? r.ood_metrics.ece : r.id_metrics.ece;
      });
      csv << model << "," << fmt_g(au.mean) << "," << fmt_g(au.stddev) << ","
          << fmt_g(ap.mean) << "," << fmt_g(ap.stddev) << ","
          << fmt_g(br.mean) << "," << fmt_g(br.stddev) << ","
          << fmt_g(ec.mean) << "," << fmt_g(ec.stddev);
      if (ood && has_erm) csv << "," << fmt_g(au.mean - erm_ood_auroc);
      csv << "\n";
      std::snprintf(line, sizeof(line), "%-18s %8.3f %8.3f %8.3f %8.3f",
                    model.c_str(), au.mean, ap.mean, br.mean, ec.mean);
      txt << line;
      if (ood && has_erm) {
        std::snprintf(line, sizeof(line), "  %+6.3f", au.mean - erm_ood_auroc);
        txt << line;
      }
      txt << "\n";
    }
  }

  // Table 3: environment leakage.
  {
    std::ofstream csv(fs::path(table_dir) / "table3_leakage.csv");
    std::ofstream txt(fs::path(table_dir) / "table3_leakage.txt");
    csv << "model,env_acc_mean,env_acc_std,chance\n";
    txt << "Environment prediction accuracy from frozen embeddings\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %8s %8s", "model", "EnvAcc",
                  "chance");
    txt << line << "\n";
    for (const std::string& model : models) {
      const auto acc = aggregate(collect(model, [](const RunRecord& r) {
        return r.leakage.env_accuracy;
      }));
      double chance_level = 0.0;
      for (const RunRecord& r : records) {
        if (r.model == model && r.leakage.chance_level > 0.0) {
          chance_level = r.leakage.chance_level;
          break;
        }
      }
      csv << model << "," << fmt_g(acc.mean) << "," << fmt_g(acc.stddev) << ","
          << (chance_level > 0.0 ? fmt_g(chance_level) : "na") << "\n";
      std::snprintf(line, sizeof(line), "%-18s %8.3f %8s", model.c_str(),
                    acc.mean,
                    chance_level > 0.0 ? fmt_g(chance_level, "%.3f").c_str()
                                       : "na");
      txt << line << "\n";
    }
  }
}

}  // namespace pirl
