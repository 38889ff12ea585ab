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

#ifndef ACCDAT_EXPERIMENT_H_
#define ACCDAT_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "accdat/data.h"
#include "accdat/model.h"
#include "accdat/train.h"
#include "accdat/wer.h"

namespace accdat {

/// Generator settings shared by the base-task and new-task corpora.
struct CorpusSettings {
  std::uint64_t seed = 7;
  int alphabet_size = 8;
  int feature_dim = 16;
  int frames_per_symbol = 4;
  int silence_frames = 3;
  int min_words = 2;
  int max_words = 3;
  int vocab_size = 30;
  int shared_words = 10;      // words common to both domains' lists
  int base_utterances = 800;  // base task: accent 0 only
  double base_noise = 0.05;
  double noise = 0.1;         // new task
  double domain_shift = 0.5;
  std::vector<int> accent_counts = {600, 220, 100, 90, 40, 25, 12};
  std::vector<std::string> accent_names = {"US",       "England", "Indian",     "Australia",
                                           "Scotland", "African", "Philippines"};
  double accent_mixing = 0.4;
  double accent_bias = 0.6;
  double max_stretch = 1.25;
  SplitRatios split;
};

struct EvalSettings {
  Weighting weighting = Weighting::kUtterance;
  std::vector<AccentSubset> subsets;  // empty = "unseen" and "all"
  unsigned workers = 0;
};

struct PathSettings {
  std::string data = "data";
  std::string runs = "runs";
};

struct ExperimentConfig {
  CorpusSettings corpus;
  ModelConfig model;
  TrainConfig train;
  EvalSettings eval;
  PathSettings paths;
};

/// Strict parse: unknown keys, type mismatches and constraint violations
/// throw ConfigError naming the JSON path. Absent fields take defaults.
/// `model.preset` ("mini", "quartznet15x5" or "custom") selects the layer
/// table; its dimensions follow the corpus.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Fully resolved document; parse_experiment_config() of it is the identity.
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// SHA-256 of the canonical (sorted-key, resolved) document.
std::string config_digest(const ExperimentConfig& config);

void validate_experiment_config(const ExperimentConfig& config);

CorpusConfig base_corpus_config(const CorpusSettings& settings);
CorpusConfig new_corpus_config(const CorpusSettings& settings);

struct DomainData {
  std::vector<Utterance> all;
  CorpusSplits splits;
};

struct ExperimentData {
  DomainData base;
  DomainData next;
};

/// Writes `<dir>/{base,new}/{manifest,train,test,validation}.jsonl` plus
/// feature files and `<dir>/config.json`.
void generate_experiment_data(const ExperimentConfig& config, const std::filesystem::path& dir);

/// Loads the split manifests written by generate_experiment_data.
ExperimentData load_experiment_data(const ExperimentConfig& config,
                                    const std::filesystem::path& dir);

/// Training data of a regime: base-task splits for pretrain_base, new-task
/// splits otherwise.
RegimeData regime_data(const ExperimentData& data, Regime regime);

}  // namespace accdat

#endif  // ACCDAT_EXPERIMENT_H_
