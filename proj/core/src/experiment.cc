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

#include "accdat/experiment.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "accdat/digest.h"
#include "accdat/error.h"
#include "json_reader.h"

namespace accdat {
namespace {

namespace fs = std::filesystem;
using detail::ObjectReader;
using nlohmann::json;

CorpusSettings parse_corpus(const json& j) {
  ObjectReader r(j, "corpus");
  CorpusSettings c;
  r.get("seed", c.seed);
  r.get("alphabet_size", c.alphabet_size);
  r.get("feature_dim", c.feature_dim);
  r.get("frames_per_symbol", c.frames_per_symbol);
  r.get("silence_frames", c.silence_frames);
  r.get("min_words", c.min_words);
  r.get("max_words", c.max_words);
  r.get("vocab_size", c.vocab_size);
  r.get("shared_words", c.shared_words);
  r.get("base_utterances", c.base_utterances);
  r.get("base_noise", c.base_noise);
  r.get("noise", c.noise);
  r.get("domain_shift", c.domain_shift);
  r.get("accent_counts", c.accent_counts);
  if (!r.get("accent_names", c.accent_names) && c.accent_names.size() != c.accent_counts.size()) {
    c.accent_names.clear();
    for (std::size_t a = 0; a < c.accent_counts.size(); ++a) {
      c.accent_names.push_back("accent" + std::to_string(a));
    }
  }
  r.get("accent_mixing", c.accent_mixing);
  r.get("accent_bias", c.accent_bias);
  r.get("max_stretch", c.max_stretch);
  if (const json* s = r.child("split")) {
    ObjectReader sr(*s, "corpus.split");
    sr.get("train", c.split.train);
    sr.get("test", c.split.test);
    sr.get("validation", c.split.validation);
    sr.finish();
  }
  r.finish();
  return c;
}

OptimizerConfig parse_optimizer(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  OptimizerConfig c;
  std::string kind = optimizer_kind_name(c.kind);
  if (r.get("kind", kind)) {
    try {
      c.kind = parse_optimizer_kind(kind);
    } catch (const ConfigError& e) {
      throw ConfigError(r.path("kind") + ": " + e.what());
    }
  }
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.get("weight_decay", c.weight_decay);
  r.finish();
  return c;
}

TrainConfig parse_train(const json& j) {
  ObjectReader r(j, "train");
  TrainConfig c;
  r.get("pretrain_epochs", c.pretrain_epochs);
  r.get("epochs", c.epochs);
  std::int64_t batch = static_cast<std::int64_t>(c.batch_size);
  if (r.get("batch_size", batch)) {
    if (batch < 1) throw ConfigError(r.path("batch_size") + ": must be >= 1");
    c.batch_size = static_cast<std::size_t>(batch);
  }
  r.get("rho", c.rho);
  if (const json* o = r.child("optimizer")) c.optimizer = parse_optimizer(*o, r.path("optimizer"));
  if (const json* l = r.child("lambda_schedule")) {
    ObjectReader lr(*l, r.path("lambda_schedule"));
    lr.get("lambda_max", c.lambda_schedule.lambda_max);
    lr.get("gamma", c.lambda_schedule.gamma);
    lr.finish();
  }
  if (const json* d = r.child("disc_pretrain")) {
    ObjectReader dr(*d, r.path("disc_pretrain"));
    dr.get("patience", c.disc_pretrain.patience);
    dr.get("min_delta", c.disc_pretrain.min_delta);
    dr.get("max_epochs", c.disc_pretrain.max_epochs);
    double lr = 0;
    if (dr.get("lr", lr)) c.disc_pretrain.lr = lr;
    dr.finish();
  }
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("discriminator_unscaled", c.discriminator_unscaled);
  std::string precision;
  if (r.get("precision", precision)) {
    try {
      c.precision = parse_precision(precision);
    } catch (const ConfigError& e) {
      throw ConfigError(r.path("precision") + ": " + e.what());
    }
  }
  r.finish();
  return c;
}

ModelConfig parse_model(const json* j, const CorpusSettings& corpus) {
  const int labels = corpus.alphabet_size;
  const int accents = static_cast<int>(corpus.accent_counts.size());
  std::string preset = "mini";
  json rest = json::object();
  if (j != nullptr) {
    if (!j->is_object()) throw ConfigError("model: expected an object");
    rest = *j;
    if (rest.contains("preset")) {
      preset = ObjectReader::convert<std::string>(rest["preset"], "model.preset");
      rest.erase("preset");
    }
  }
  ModelConfig base;
  if (preset == "mini") {
    base = mini_model_config(corpus.feature_dim, labels, accents);
  } else if (preset == "quartznet15x5") {
    base = quartznet15x5_config(corpus.feature_dim, labels, accents);
  } else if (preset == "custom") {
    base.input_channels = corpus.feature_dim;
    base.n_accents = accents;
  } else {
    throw ConfigError("model.preset: must be \"mini\", \"quartznet15x5\" or \"custom\"");
  }
  return model_config_from_json(rest, "model", base);
}

std::vector<AccentSubset> parse_subsets(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<AccentSubset> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], path + "[" + std::to_string(i) + "]");
    AccentSubset s;
    r.require("name", s.name);
    r.require("accents", s.accents);
    r.finish();
    out.push_back(std::move(s));
  }
  return out;
}

EvalSettings parse_eval(const json& j) {
  ObjectReader r(j, "eval");
  EvalSettings e;
  std::string weighting = "utterance";
  if (r.get("weighting", weighting)) {
    if (weighting == "utterance") {
      e.weighting = Weighting::kUtterance;
    } else if (weighting == "word") {
      e.weighting = Weighting::kWord;
    } else {
      throw ConfigError(r.path("weighting") + ": must be \"utterance\" or \"word\"");
    }
  }
  if (const json* s = r.child("subsets")) e.subsets = parse_subsets(*s, r.path("subsets"));
  r.get("workers", e.workers);
  r.finish();
  return e;
}

void validate_corpus_settings(const CorpusSettings& c) {
  if (c.alphabet_size < 2 || c.alphabet_size > 27) {
    throw ConfigError("corpus.alphabet_size: must be in [2, 27]");
  }
  if (c.feature_dim < 1) throw ConfigError("corpus.feature_dim: must be >= 1");
  if (c.frames_per_symbol < 1) throw ConfigError("corpus.frames_per_symbol: must be >= 1");
  if (c.silence_frames < 0) throw ConfigError("corpus.silence_frames: must be >= 0");
  if (c.min_words < 1) throw ConfigError("corpus.min_words: must be >= 1");
  if (c.max_words < c.min_words) throw ConfigError("corpus.max_words: must be >= min_words");
  if (c.vocab_size < 1) throw ConfigError("corpus.vocab_size: must be >= 1");
  if (c.shared_words < 0 || c.shared_words > c.vocab_size) {
    throw ConfigError("corpus.shared_words: must be in [0, vocab_size]");
  }
  if (c.base_utterances < 1) throw ConfigError("corpus.base_utterances: must be >= 1");
  if (!(c.base_noise >= 0)) throw ConfigError("corpus.base_noise: must be >= 0");
  if (!(c.noise >= 0)) throw ConfigError("corpus.noise: must be >= 0");
  if (!(c.domain_shift >= 0)) throw ConfigError("corpus.domain_shift: must be >= 0");
  if (c.accent_counts.empty()) throw ConfigError("corpus.accent_counts: accent 0 must be present");
  for (std::size_t i = 0; i < c.accent_counts.size(); ++i) {
    if (c.accent_counts[i] <= 0) {
      throw ConfigError("corpus.accent_counts[" + std::to_string(i) + "]: must be > 0");
    }
  }
  if (!c.accent_names.empty() && c.accent_names.size() != c.accent_counts.size()) {
    throw ConfigError("corpus.accent_names: must name every accent (" +
                      std::to_string(c.accent_counts.size()) + ")");
  }
  if (!(c.accent_mixing >= 0)) throw ConfigError("corpus.accent_mixing: must be >= 0");
  if (!(c.accent_bias >= 0)) throw ConfigError("corpus.accent_bias: must be >= 0");
  if (!(c.max_stretch >= 1)) throw ConfigError("corpus.max_stretch: must be >= 1");
  const auto& s = c.split;
  if (!(s.train >= 0 && s.test >= 0 && s.validation >= 0) ||
      std::fabs(s.train + s.test + s.validation - 1.0) > 1e-9) {
    throw ConfigError("corpus.split: ratios must be non-negative and sum to 1");
  }
}

void write_split(const fs::path& dir, const char* name, const std::vector<Utterance>& utts) {
  write_manifest(dir / (std::string(name) + ".jsonl"), utts);
}

DomainData load_domain(const fs::path& dir, const Alphabet& alphabet, std::size_t channels) {
  DomainData d;
  d.all = load_manifest(dir / "manifest.jsonl", alphabet, channels);
  d.splits.train = load_manifest(dir / "train.jsonl", alphabet, channels);
  d.splits.test = load_manifest(dir / "test.jsonl", alphabet, channels);
  d.splits.validation = load_manifest(dir / "validation.jsonl", alphabet, channels);
  return d;
}

}  // namespace

void validate_experiment_config(const ExperimentConfig& c) {
  validate_corpus_settings(c.corpus);
  validate_model_config(c.model);
  if (c.model.input_channels != c.corpus.feature_dim) {
    throw ConfigError("model.input_channels: must equal corpus.feature_dim (" +
                      std::to_string(c.corpus.feature_dim) + ")");
  }
  if (c.model.num_labels() != c.corpus.alphabet_size) {
    throw ConfigError("model.decoder_block.channels: must be corpus.alphabet_size + 1 (" +
                      std::to_string(c.corpus.alphabet_size + 1) + ")");
  }
  if (c.model.n_accents != static_cast<int>(c.corpus.accent_counts.size())) {
    throw ConfigError("model.n_accents: must equal the number of corpus accents (" +
                      std::to_string(c.corpus.accent_counts.size()) + ")");
  }
  validate_train_config(c.train);
  for (std::size_t i = 0; i < c.eval.subsets.size(); ++i) {
    const auto& s = c.eval.subsets[i];
    const std::string path = "eval.subsets[" + std::to_string(i) + "]";
    if (s.name.empty()) throw ConfigError(path + ".name: must be non-empty");
    if (s.accents.empty()) throw ConfigError(path + ".accents: must be non-empty");
    for (int a : s.accents) {
      if (a < 0 || a >= c.model.n_accents) throw ConfigError(path + ".accents: unknown accent id");
    }
  }
  if (c.paths.data.empty()) throw ConfigError("paths.data: must be non-empty");
  if (c.paths.runs.empty()) throw ConfigError("paths.runs: must be non-empty");
}

ExperimentConfig parse_experiment_config(const json& j) {
  ObjectReader r(j, "");
  ExperimentConfig c;
  if (const json* s = r.child("corpus")) c.corpus = parse_corpus(*s);
  c.model = parse_model(r.child("model"), c.corpus);
  if (const json* s = r.child("train")) c.train = parse_train(*s);
  if (const json* s = r.child("eval")) c.eval = parse_eval(*s);
  if (const json* s = r.child("paths")) {
    ObjectReader pr(*s, "paths");
    pr.get("data", c.paths.data);
    pr.get("runs", c.paths.runs);
    pr.finish();
  }
  r.finish();
  validate_experiment_config(c);
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
  return parse_experiment_config(j);
}

json experiment_config_to_json(const ExperimentConfig& c) {
  const auto& k = c.corpus;
  json corpus{{"seed", k.seed},
              {"alphabet_size", k.alphabet_size},
              {"feature_dim", k.feature_dim},
              {"frames_per_symbol", k.frames_per_symbol},
              {"silence_frames", k.silence_frames},
              {"min_words", k.min_words},
              {"max_words", k.max_words},
              {"vocab_size", k.vocab_size},
              {"shared_words", k.shared_words},
              {"base_utterances", k.base_utterances},
              {"base_noise", k.base_noise},
              {"noise", k.noise},
              {"domain_shift", k.domain_shift},
              {"accent_counts", k.accent_counts},
              {"accent_names", k.accent_names},
              {"accent_mixing", k.accent_mixing},
              {"accent_bias", k.accent_bias},
              {"max_stretch", k.max_stretch},
              {"split", {{"train", k.split.train}, {"test", k.split.test},
                         {"validation", k.split.validation}}}};
  json model = model_config_to_json(c.model);
  model["preset"] = "custom";
  const auto& t = c.train;
  json train{{"pretrain_epochs", t.pretrain_epochs},
             {"epochs", t.epochs},
             {"batch_size", t.batch_size},
             {"rho", t.rho},
             {"optimizer", {{"kind", optimizer_kind_name(t.optimizer.kind)},
                            {"lr", t.optimizer.lr},
                            {"beta1", t.optimizer.beta1},
                            {"beta2", t.optimizer.beta2},
                            {"eps", t.optimizer.eps},
                            {"weight_decay", t.optimizer.weight_decay}}},
             {"lambda_schedule", {{"lambda_max", t.lambda_schedule.lambda_max},
                                  {"gamma", t.lambda_schedule.gamma}}},
             {"disc_pretrain", {{"patience", t.disc_pretrain.patience},
                                {"min_delta", t.disc_pretrain.min_delta},
                                {"max_epochs", t.disc_pretrain.max_epochs},
                                {"lr", t.disc_pretrain.lr ? json(*t.disc_pretrain.lr)
                                                          : json(nullptr)}}},
             {"seed", t.seed},
             {"checkpoint_every", t.checkpoint_every},
             {"discriminator_unscaled", t.discriminator_unscaled},
             {"precision", precision_name(t.precision)}};
  json subsets = json::array();
  for (const auto& s : c.eval.subsets) subsets.push_back({{"name", s.name}, {"accents", s.accents}});
  json eval{{"weighting", c.eval.weighting == Weighting::kWord ? "word" : "utterance"},
            {"subsets", subsets},
            {"workers", c.eval.workers}};
  json paths{{"data", c.paths.data}, {"runs", c.paths.runs}};
  return json{{"corpus", corpus}, {"model", model}, {"train", train}, {"eval", eval},
              {"paths", paths}};
}

std::string config_digest(const ExperimentConfig& config) {
  return sha256_hex(experiment_config_to_json(config).dump());
}

CorpusConfig base_corpus_config(const CorpusSettings& s) {
  CorpusConfig c;
  c.domain = Domain::kBase;
  c.seed = s.seed;
  c.alphabet_size = s.alphabet_size;
  c.feature_dim = s.feature_dim;
  c.frames_per_symbol = s.frames_per_symbol;
  c.silence_frames = s.silence_frames;
  c.min_words = s.min_words;
  c.max_words = s.max_words;
  c.vocabulary = make_vocabularies(s.seed, s.alphabet_size, s.vocab_size, s.shared_words).base;
  c.accent_counts = {s.base_utterances};
  if (!s.accent_names.empty()) c.accent_names = {s.accent_names.front()};
  c.noise = s.base_noise;
  c.domain_shift = s.domain_shift;
  c.accent_mixing = s.accent_mixing;
  c.accent_bias = s.accent_bias;
  c.max_stretch = s.max_stretch;
  return c;
}

CorpusConfig new_corpus_config(const CorpusSettings& s) {
  CorpusConfig c = base_corpus_config(s);
  c.domain = Domain::kNew;
  c.vocabulary = make_vocabularies(s.seed, s.alphabet_size, s.vocab_size, s.shared_words).next;
  c.accent_counts = s.accent_counts;
  c.accent_names = s.accent_names;
  c.noise = s.noise;
  return c;
}

void generate_experiment_data(const ExperimentConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "config.json", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / "config.json").string());
    os << experiment_config_to_json(config).dump(2) << "\n";
  }
  const std::pair<const char*, CorpusConfig> domains[] = {
      {"base", base_corpus_config(config.corpus)}, {"new", new_corpus_config(config.corpus)}};
  for (const auto& [name, cc] : domains) {
    const fs::path out = dir / name;
    const auto utts = generate_corpus(cc, out);
    const auto splits = split_corpus(utts, config.corpus.split,
                                     derive_seed({config.corpus.seed, stable_hash64(name)}));
    write_split(out, "train", splits.train);
    write_split(out, "test", splits.test);
    write_split(out, "validation", splits.validation);
  }
}

ExperimentData load_experiment_data(const ExperimentConfig& config, const fs::path& dir) {
  const Alphabet alphabet(config.corpus.alphabet_size);
  const auto channels = static_cast<std::size_t>(config.corpus.feature_dim);
  ExperimentData d;
  d.base = load_domain(dir / "base", alphabet, channels);
  d.next = load_domain(dir / "new", alphabet, channels);
  return d;
}

RegimeData regime_data(const ExperimentData& data, Regime regime) {
  const DomainData& d = regime == Regime::kPretrainBase ? data.base : data.next;
  return RegimeData{d.splits.train, d.splits.validation};
}

}  // namespace accdat
