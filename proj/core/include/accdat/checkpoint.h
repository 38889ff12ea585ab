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

#ifndef ACCDAT_CHECKPOINT_H_
#define ACCDAT_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "accdat/model.h"
#include "accdat/optim.h"

namespace accdat {

inline constexpr int kCheckpointFormatVersion = 1;

/// Where a run stands; enough to continue it exactly.
struct TrainProgress {
  std::uint64_t step = 0;           // optimizer steps completed in the main phase
  std::uint64_t epoch = 0;          // current epoch (0-based)
  std::uint64_t step_in_epoch = 0;  // batches of `epoch` already consumed
  std::string phase = "train";      // "disc_pretrain", then "train"
};

template <typename S>
struct Checkpoint {
  std::string regime;
  std::vector<std::string> lineage;  // regimes applied so far, oldest first
  std::string config_digest;
  TrainProgress progress;
  std::string rng_state;
  ModelParams<S> params;
  OptimizerState<S> optimizer;
  nlohmann::json metrics = nlohmann::json::array();  // per-epoch records so far
  nlohmann::json accumulators = nlohmann::json::object();  // partial-epoch sums
};

/// Writes `dir/meta.json`, `dir/index.json` and `dir/params.bin`. Output is
/// a pure function of the checkpoint.
template <typename S>
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint<S>& checkpoint);

/// Reads and verifies a checkpoint; tensors stored in the other precision
/// are converted. Throws FormatError on truncation, version or digest
/// mismatch; nothing is returned unless every check passes.
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& dir);

/// dtype recorded in a checkpoint's meta.json ("f32" or "f64").
std::string checkpoint_dtype(const std::filesystem::path& dir);

}  // namespace accdat

#endif  // ACCDAT_CHECKPOINT_H_
