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

#ifndef ACCDAT_MODEL_H_
#define ACCDAT_MODEL_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "accdat/ops.h"
#include "accdat/rng.h"
#include "accdat/tape.h"

namespace accdat {

enum class BlockKind {
  kConv,   // one separable conv: depthwise -> pointwise -> batch norm -> ReLU
  kBlock,  // residual block: groups of the above, shortcut added before the last ReLU
};

struct BlockConfig {
  std::string name;
  BlockKind kind = BlockKind::kConv;
  int kernel = 1;
  int channels = 1;
  int repeats_within = 1;
  int block_repeats = 1;
  int stride = 1;
  int dilation = 1;
  int in_channels = 0;  // expected input width; 0 = take the previous block's output
};

struct ModelConfig {
  int input_channels = 16;
  std::vector<BlockConfig> encoder_blocks;  // C1, B-blocks, C2, C3
  BlockConfig decoder_block;                // C4, channels = labels + blank
  std::vector<int> disc_hidden = {512, 1024, 1024};
  double disc_dropout = 0.2;
  int n_accents = 7;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  int num_labels() const { return decoder_block.channels - 1; }
  int feature_channels() const {
    return encoder_blocks.empty() ? input_channels : encoder_blocks.back().channels;
  }
};

/// Throws ConfigError on an invalid config; returns non-fatal warnings.
std::vector<std::string> validate_model_config(const ModelConfig& config);

/// QuartzNet 15x5 layer table; `num_labels` excludes the blank.
ModelConfig quartznet15x5_config(int input_channels, int num_labels, int n_accents);

/// Desk-scale variant of the same topology.
ModelConfig mini_model_config(int input_channels, int num_labels, int n_accents);

nlohmann::json model_config_to_json(const ModelConfig& config);

/// Strict inverse of model_config_to_json; errors name the field under `path`.
/// Absent fields keep the values already in `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model",
                                   ModelConfig base = {});

/// Feature encoder, transcription decoder, and accent discriminator
/// parameters, plus the encoder's batch-norm running statistics.
template <typename S>
struct ModelParams {
  ModelConfig config;
  ParameterSet<S> encoder;
  ParameterSet<S> decoder;
  ParameterSet<S> discriminator;
  std::map<std::string, BatchNormState<S>> batch_norm;

  bool has_discriminator() const { return !discriminator.empty(); }

  /// Every parameter, encoder first, then decoder, then discriminator.
  std::vector<Parameter<S>*> all();
  std::vector<const Parameter<S>*> all() const;
};

/// Initializes encoder and decoder (and the discriminator when
/// `with_discriminator`) from `rng`: weights U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), zero biases, unit batch-norm scale.
template <typename S>
ModelParams<S> build_model(const ModelConfig& config, Rng& rng, bool with_discriminator = true);

/// Replaces the discriminator with a freshly initialized one.
template <typename S>
void init_discriminator(ModelParams<S>& params, Rng& rng);

/// Encoder over a batch of [F, T_i] inputs; returns [C3, ceil(T_i/stride)]
/// features per input. Train mode uses batch statistics pooled over the
/// inputs selected by `statistics` (all by default) and updates the running
/// statistics.
template <typename S>
std::vector<Var> encoder_forward(Tape<S>& tape, ModelParams<S>& params,
                                 std::span<const Var> inputs, Mode mode,
                                 const InputMask& statistics = {});

/// Single-utterance convenience overload.
template <typename S>
Var encoder_forward(Tape<S>& tape, ModelParams<S>& params, Var input, Mode mode);

/// C4 then per-frame log-softmax: [C3, T'] -> [T', labels + 1].
template <typename S>
Var decoder_forward(Tape<S>& tape, const ModelParams<S>& params, Var features);

/// Classifier on an already pooled feature vector [C3] -> accent log-probs.
template <typename S>
Var discriminator_head(Tape<S>& tape, const ModelParams<S>& params, Var pooled, Mode mode,
                       Rng& rng);

/// Mean over time, gradient reversal with `grl_lambda` (omitted when
/// nullopt), then discriminator_head.
template <typename S>
Var discriminator_forward(Tape<S>& tape, const ModelParams<S>& params, Var features,
                          std::optional<S> grl_lambda, Mode mode, Rng& rng);

template <typename S>
Var grl_apply(Tape<S>& tape, Var x, S lambda) {
  return grl(tape, x, lambda);
}

}  // namespace accdat

#endif  // ACCDAT_MODEL_H_
