// Copyright 2026 The accdat Authors.
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

// accdat: corpus generation, training, evaluation, reporting and self-checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "accdat/checkpoint.h"
#include "accdat/digest.h"
#include "accdat/error.h"
#include "accdat/experiment.h"
#include "accdat/train.h"
#include "accdat/verify.h"
#include "accdat/wer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw accdat::DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw accdat::DataError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw accdat::DataError("cannot write " + path.string());
  os << text;
}

accdat::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  accdat::ExperimentConfig cfg = path.empty() ? accdat::parse_experiment_config(json::object())
                                              : accdat::parse_config(path);
  if (seed) cfg.corpus.seed = *seed;
  return cfg;
}

// --- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenArgs& a) {
  const auto cfg = load_config(a.config, a.seed);
  accdat::generate_experiment_data(cfg, a.out);
  std::printf("wrote corpus to %s (digest %s)\n", a.out.c_str(),
              accdat::directory_digest(a.out).c_str());
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string regime;
  std::string data;
  std::string init;
  std::string resume;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
};

template <typename S>
void run_train(const accdat::ExperimentConfig& cfg, accdat::Regime regime, const TrainArgs& a) {
  const auto data = accdat::load_experiment_data(cfg, a.data);
  accdat::RunOptions opts;
  opts.out_dir = a.out;
  if (!a.init.empty()) opts.init = fs::path(a.init);
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  opts.config_digest = accdat::config_digest(cfg);
  opts.accent_names = cfg.corpus.accent_names;
  const auto result = accdat::run_regime<S>(regime, cfg.model, cfg.train,
                                            accdat::regime_data(data, regime), opts);
  std::printf("final checkpoint: %s\n", result.final_checkpoint.string().c_str());
}

int cmd_train(const TrainArgs& a) {
  auto cfg = load_config(a.config, std::nullopt);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.print_config) {
    std::printf("%s\n", accdat::experiment_config_to_json(cfg).dump(2).c_str());
    return 0;
  }
  if (a.regime.empty() || a.data.empty() || a.out.empty()) {
    throw CLI::RequiredError("train needs --regime, --data and --out");
  }
  const accdat::Regime regime = accdat::parse_regime(a.regime);
  if (accdat::resolve_precision(cfg.train.precision) == accdat::Precision::kF64) {
    run_train<double>(cfg, regime, a);
  } else {
    run_train<float>(cfg, regime, a);
  }
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string domain = "new";
  std::string out;
  std::string label;
  std::string config;
};

template <typename S>
json run_eval(const accdat::ExperimentConfig& cfg, const EvalArgs& a) {
  auto ck = accdat::load_checkpoint<S>(a.checkpoint);
  const accdat::Alphabet alphabet(cfg.corpus.alphabet_size);
  const fs::path manifest = fs::path(a.data) / a.domain / (a.split + ".jsonl");
  const auto utts = accdat::load_manifest(manifest, alphabet,
                                          static_cast<std::size_t>(cfg.corpus.feature_dim));
  accdat::EvalOptions opts;
  opts.label = a.label.empty() ? ck.regime : a.label;
  opts.weighting = cfg.eval.weighting;
  opts.subsets = cfg.eval.subsets;
  opts.accent_names = cfg.corpus.accent_names;
  opts.workers = cfg.eval.workers;
  json report = accdat::report_to_json(accdat::evaluate_model(ck.params, utts, alphabet, opts));
  report["config_digest"] = ck.config_digest;
  report["checkpoint_params_digest"] =
      accdat::sha256_file(fs::path(a.checkpoint) / "params.bin");
  return report;
}

int cmd_eval(const EvalArgs& a) {
  if (a.split != "test" && a.split != "validation" && a.split != "train") {
    throw accdat::ConfigError("--split: must be test, validation or train");
  }
  if (a.domain != "new" && a.domain != "base") throw accdat::ConfigError("--domain: must be new or base");
  // The corpus settings come from the data directory unless a config is given.
  const fs::path data_config = fs::path(a.data) / "config.json";
  const auto cfg = !a.config.empty()        ? accdat::parse_config(a.config)
                   : fs::exists(data_config) ? accdat::parse_config(data_config)
                                             : accdat::parse_experiment_config(json::object());
  std::string dtype = accdat::checkpoint_dtype(a.checkpoint);
  if (const char* env = std::getenv("ACCDAT_PRECISION"); env != nullptr && *env != '\0') {
    dtype = accdat::precision_name(accdat::resolve_precision(accdat::Precision::kF32));
  }
  const json report = dtype == "f64" ? run_eval<double>(cfg, a) : run_eval<float>(cfg, a);
  write_text(a.out, report.dump(2) + "\n");
  const auto parsed = accdat::report_from_json(report);
  const accdat::EvalReport one[1] = {parsed};
  std::printf("%s", accdat::render_report_table(std::span<const accdat::EvalReport>(one)).c_str());
  return 0;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<accdat::EvalReport> reports;
  json doc{{"reports", json::array()}};
  for (const auto& path : a.inputs) {
    const json j = read_json(path);
    reports.push_back(accdat::report_from_json(j));
    doc["reports"].push_back(accdat::report_to_json(reports.back()));
  }
  const std::string table = accdat::render_report_table(std::span<const accdat::EvalReport>(reports));
  write_text(a.out, table);
  fs::path json_out = a.out;
  json_out.replace_extension(".json");
  write_text(json_out, doc.dump(2) + "\n");
  std::printf("%s", table.c_str());
  return 0;
}

// --- verify -----------------------------------------------------------------

int cmd_verify() {
  const auto results = accdat::run_verification();
  bool ok = true;
  for (const auto& r : results) {
    std::printf("[%s] %-24s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    ok = ok && r.passed;
  }
  std::printf("%s\n", ok ? "all suites passed" : "verification FAILED");
  return ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"accdat: accent-robust CTC training with domain adversarial training"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic corpus, manifests and splits");
  gen_cmd->add_option("--config", gen.config, "Experiment config (JSON)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed (overrides corpus.seed)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run one training regime");
  train_cmd->add_option("--config", train.config, "Experiment config (JSON)");
  train_cmd->add_option("--regime", train.regime, "pretrain_base, ctc_retune, dat or accpt_dat");
  train_cmd->add_option("--data", train.data, "Directory written by gen-data");
  train_cmd->add_option("--init", train.init, "pretrain_base checkpoint to start from");
  train_cmd->add_option("--resume", train.resume, "Checkpoint of this run to continue");
  train_cmd->add_option("--out", train.out, "Run directory");
  train_cmd->add_option("--seed", train.seed, "Training seed (overrides train.seed)");
  train_cmd->add_flag("--print-config", train.print_config, "Print the resolved config and exit");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Decode a split and write a WER report");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval.data, "Directory written by gen-data")->required();
  eval_cmd->add_option("--split", eval.split, "test, validation or train");
  eval_cmd->add_option("--domain", eval.domain, "new or base");
  eval_cmd->add_option("--out", eval.out, "Report path (JSON)")->required();
  eval_cmd->add_option("--label", eval.label, "Row label (default: the checkpoint's regime)");
  eval_cmd->add_option("--config", eval.config, "Experiment config (default: <data>/config.json)");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Tabulate WER reports");
  report_cmd->add_option("--inputs", report.inputs, "Report files")->required();
  report_cmd->add_option("--out", report.out, "Text table path; JSON goes next to it")->required();

  app.add_subcommand("verify", "Run the 64-bit verification suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*report_cmd) return cmd_report(report);
    return cmd_verify();
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const accdat::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
