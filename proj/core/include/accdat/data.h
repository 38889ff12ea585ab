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

#ifndef ACCDAT_DATA_H_
#define ACCDAT_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "accdat/ctc.h"
#include "accdat/tensor.h"

namespace accdat {

/// Character inventory of the synthetic language. Label 0 is the word
/// separator; labels 1..size-1 are the letters 'a', 'b', ...
class Alphabet {
 public:
  explicit Alphabet(int size = 8);

  int size() const { return size_; }
  char symbol(int label) const;
  int label(char symbol) const;

  /// Letters of each word, words joined by the separator label.
  LabelSequence encode(const std::vector<std::string>& words) const;
  /// Inverse of encode(); empty words (doubled separators) are dropped.
  std::vector<std::string> decode(const LabelSequence& labels) const;

 private:
  int size_;
};

/// One utterance: features [F, T] plus optional ground-truth words. The
/// words are kept for scoring even for accents trained without them.
struct Utterance {
  std::string id;
  std::string features_path;  // relative to the manifest directory
  Tensor<float> features;
  std::optional<std::vector<std::string>> text;
  std::optional<LabelSequence> labels;
  int accent_id = 0;

  bool annotated() const { return labels.has_value(); }
  std::size_t frames() const { return features.rank() == 2 ? features.dim(1) : 0; }
};

/// Copy with the transcription removed; how accents >= 1 enter training.
Utterance without_text(const Utterance& u);

std::vector<std::string> split_words(const std::string& text);
std::string join_words(const std::vector<std::string>& words);

// --- feature files ---------------------------------------------------------

struct FeatureHeader {
  std::uint32_t version = 1;
  std::uint32_t channels = 0;
  std::uint32_t frames = 0;
};

/// "ACFT", u32 version, u32 channels, u32 frames, then frames x channels
/// little-endian float32 values, frame-major. `features` is [F, T].
void write_features(const std::filesystem::path& path, const Tensor<float>& features);
Tensor<float> read_features(const std::filesystem::path& path);
FeatureHeader read_feature_header(const std::filesystem::path& path);

// --- manifests -------------------------------------------------------------

/// JSON-lines with fields id, features, text (or null), accent, frames.
void write_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utterances);

/// Loads and validates every record, including its feature file header.
/// Text is encoded with `alphabet`. `expected_channels`, when set, must
/// match every feature file.
std::vector<Utterance> load_manifest(const std::filesystem::path& path,
                                     const Alphabet& alphabet = Alphabet(),
                                     std::optional<std::size_t> expected_channels = std::nullopt);

// --- synthetic corpus ------------------------------------------------------

enum class Domain { kBase, kNew };
std::string domain_name(Domain d);

/// Channel-affine map x -> A x + b followed by linear-interpolation time
/// resampling by `stretch`. Accent 0 is the identity.
struct AccentTransform {
  int accent_id = 0;
  Tensor<double> mixing;      // [F, F]
  std::vector<double> bias;   // [F]
  double stretch = 1.0;
  double noise = 0.0;

  Tensor<float> apply(const Tensor<float>& features) const;
  double condition_number() const;
};

struct CorpusConfig {
  Domain domain = Domain::kNew;
  std::uint64_t seed = 7;
  int alphabet_size = 8;
  int feature_dim = 16;
  int frames_per_symbol = 4;
  int silence_frames = 3;
  int min_words = 2;
  int max_words = 3;
  std::vector<std::string> vocabulary;
  std::vector<int> accent_counts;  // index = accent id
  std::vector<std::string> accent_names;
  double noise = 0.1;
  double domain_shift = 0.0;       // norm scale of the per-domain prototype offset
  double accent_mixing = 0.4;      // scale of the random perturbation of A
  double accent_bias = 0.6;        // scale of b
  double max_stretch = 1.25;       // stretch drawn from [1, max_stretch]
};

void validate_corpus_config(const CorpusConfig& config);

/// Word lists for the base and new domains, drawn from the corpus seed:
/// distinct words over the alphabet's letters with no letter doubled.
struct Vocabularies {
  std::vector<std::string> base;
  std::vector<std::string> next;
};
Vocabularies make_vocabularies(std::uint64_t seed, int alphabet_size, int vocab_size,
                               int shared_words);

/// Per-accent transforms for accents [0, n). Depends only on the seed and
/// dimensions, so both domains share them.
std::vector<AccentTransform> make_accent_transforms(const CorpusConfig& config);

/// Features before the accent transform: symbol prototypes held for
/// frames_per_symbol frames, silence at both ends, additive noise.
Tensor<float> render_base_features(const CorpusConfig& config, const LabelSequence& labels,
                                   std::uint64_t utterance_seed);

/// Generates every utterance (in memory); deterministic in `config`.
std::vector<Utterance> generate_utterances(const CorpusConfig& config);

/// Generates and writes `<out_dir>/feats/*.ft` and `<out_dir>/manifest.jsonl`.
std::vector<Utterance> generate_corpus(const CorpusConfig& config,
                                       const std::filesystem::path& out_dir);

// --- splits and batches ----------------------------------------------------

struct SplitRatios {
  double train = 0.70;
  double test = 0.20;
  double validation = 0.10;
};

struct CorpusSplits {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
  std::vector<Utterance> validation;
};

/// Per-accent stratified random partition. Test and validation sizes are
/// floor(n * ratio); the remainder goes to train. Accents with fewer than 3
/// utterances go entirely to train.
CorpusSplits split_corpus(const std::vector<Utterance>& utterances, const SplitRatios& ratios,
                          std::uint64_t seed);

struct BatchItem {
  const Utterance* utterance = nullptr;
  bool annotated = false;  // contributes to the CTC term
};
using Batch = std::vector<BatchItem>;

/// One epoch of mixed batches: round(rho * N) items from `annotated` and the
/// rest from `unannotated`. The epoch ends when the larger stream has been
/// consumed once; streams wrap around (reshuffled) to fill every batch.
std::vector<Batch> make_batches(const std::vector<Utterance>& annotated,
                                const std::vector<Utterance>& unannotated,
                                std::size_t batch_size, double rho, std::uint64_t seed);

}  // namespace accdat

#endif  // ACCDAT_DATA_H_
