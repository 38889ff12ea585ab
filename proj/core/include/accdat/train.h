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

#ifndef ACCDAT_TRAIN_H_
#define ACCDAT_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "accdat/data.h"
#include "accdat/model.h"
#include "accdat/optim.h"
#include "accdat/wer.h"

namespace accdat {

enum class Regime { kPretrainBase, kCtcRetune, kDat, kAccptDat };

std::string regime_name(Regime regime);
Regime parse_regime(const std::string& name);
/// dat and accpt_dat train a discriminator; the others never build one.
bool regime_uses_discriminator(Regime regime);
/// Every regime except pretrain_base starts from a pretrain_base checkpoint.
bool regime_requires_init(Regime regime);

enum class Precision { kF32, kF64 };
std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);
/// ACCDAT_PRECISION={f32,f64} overrides `configured` when set.
Precision resolve_precision(Precision configured);

struct DiscPretrainConfig {
  int patience = 3;          // consecutive epochs below min_delta before stopping
  double min_delta = 0.0025; // accuracy improvement, as a fraction
  int max_epochs = 50;
  std::optional<double> lr;  // defaults to the training optimizer's rate
};

struct TrainConfig {
  int pretrain_epochs = 12;  // pretrain_base
  int epochs = 8;            // ctc_retune, dat, accpt_dat
  std::size_t batch_size = 16;
  double rho = 0.5;          // annotated fraction of each mixed batch
  OptimizerConfig optimizer;
  LambdaSchedule lambda_schedule;
  DiscPretrainConfig disc_pretrain;
  std::uint64_t seed = 1;
  std::uint64_t checkpoint_every = 0;  // optimizer steps; 0 = final checkpoint only
  bool discriminator_unscaled = false;
  Precision precision = Precision::kF32;
};

void validate_train_config(const TrainConfig& config, const std::string& path = "train");

/// Per-batch quantities of the adversarial objective. loss_ctc is the mean
/// over annotated samples, loss_disc the mean over all samples, and
/// objective = (sum of CTC terms - lambda * sum of CE terms) / N.
struct DatLosses {
  double loss_ctc = 0;
  double loss_disc = 0;
  double objective = 0;
  std::size_t annotated = 0;
  std::size_t total = 0;
  bool has_disc = false;
};

struct DatOptions {
  bool discriminator_unscaled = false;
};

/// Train-mode normalization statistics of a DAT batch come from its annotated
/// samples, or from every sample when none is annotated. With lambda = 0 the
/// unannotated samples then have no effect at all.
InputMask dat_statistics_mask(const Batch& batch);

/// Gradients of one mixed batch from a single backward pass through the
/// gradient reversal layer. The discriminator gradient carries the factor
/// lambda unless `discriminator_unscaled`. Parameter groups whose terms are
/// inactive (no annotated sample for the decoder; lambda = 0 in the scaled
/// variant for the discriminator) are absent from the map.
template <typename S>
GradientMap<S> dat_gradients(ModelParams<S>& params, const Batch& batch, double lambda,
                             const DatOptions& options, Rng& rng, DatLosses* losses);

/// dat_gradients followed by one optimizer update.
template <typename S>
DatLosses dat_step(ModelParams<S>& params, OptimizerState<S>& optimizer, const Batch& batch,
                   double lambda, const DatOptions& options, Rng& rng);

struct DiscPretrainResult {
  std::vector<double> accuracy;  // validation accuracy after each epoch
  int epochs = 0;
  double final_accuracy = 0;
};

/// Trains only the discriminator, without gradient reversal, on mean-pooled
/// features of the frozen encoder (eval-mode batch norm). Throws
/// InvariantError if any encoder or decoder value changes.
template <typename S>
DiscPretrainResult pretrain_discriminator(ModelParams<S>& params, const OptimizerConfig& optimizer,
                                          const std::vector<Utterance>& train,
                                          const std::vector<Utterance>& validation,
                                          const DiscPretrainConfig& config,
                                          std::size_t batch_size, Rng& rng);

/// Fraction of `utterances` whose accent the discriminator predicts (eval mode).
template <typename S>
double discriminator_accuracy(ModelParams<S>& params, const std::vector<Utterance>& utterances);

struct EvalOptions {
  std::string label;
  Weighting weighting = Weighting::kUtterance;
  std::vector<AccentSubset> subsets;   // empty = default_subsets
  std::vector<std::string> accent_names;
  unsigned workers = 0;                // 0 = hardware concurrency
};

/// Greedy decoding and WER aggregation. Every utterance needs ground truth.
template <typename S>
EvalReport evaluate_model(ModelParams<S>& params, const std::vector<Utterance>& utterances,
                          const Alphabet& alphabet, const EvalOptions& options);

struct RegimeData {
  std::vector<Utterance> train;       // every accent, text included
  std::vector<Utterance> validation;  // every accent, text included
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> init;
  std::optional<std::filesystem::path> resume;
  std::string config_digest;
  std::vector<std::string> accent_names;
  /// Stop after this many optimizer steps (checkpointing first); for tests.
  std::optional<std::uint64_t> stop_after_step;
};

struct RunResult {
  std::filesystem::path final_checkpoint;  // empty when stopped early
  nlohmann::json metrics = nlohmann::json::array();
  std::optional<DiscPretrainResult> disc_pretrain;
};

/// Runs one regime end to end, writing `<out_dir>/metrics.jsonl`,
/// periodic `<out_dir>/step-XXXXXXXX` checkpoints and `<out_dir>/final`.
template <typename S>
RunResult run_regime(Regime regime, const ModelConfig& model, const TrainConfig& config,
                     const RegimeData& data, const RunOptions& options);

}  // namespace accdat

#endif  // ACCDAT_TRAIN_H_
