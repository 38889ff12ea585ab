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

#ifndef ACCDAT_CTC_H_
#define ACCDAT_CTC_H_

#include <cstddef>
#include <vector>

#include "accdat/tape.h"
#include "accdat/tensor.h"

namespace accdat {

/// Label indices in [0, V). The CTC blank is index V, the last column of a
/// [T, V+1] log-probability matrix.
using LabelSequence = std::vector<int>;

/// Fewest frames that can emit `target`: one per label plus one blank
/// between each pair of equal neighbours.
std::size_t ctc_min_frames(const LabelSequence& target);

/// Merges repeats and then drops blanks.
LabelSequence ctc_collapse(const std::vector<int>& path, int blank);

template <typename S>
struct CtcResult {
  double loss = 0.0;
  Tensor<S> grad;  // d loss / d log_probs, [T, V+1]
};

/// Negative log-likelihood of `target` under per-frame log-probabilities,
/// by log-space forward-backward over the blank-interleaved target. The
/// gradient treats every log_probs entry as a free variable.
///
/// Throws InfeasibleTarget when T < ctc_min_frames(target) and
/// InvalidArgument on NaN input or labels outside [0, V).
template <typename S>
CtcResult<S> ctc_loss_grad(const Tensor<S>& log_probs, const LabelSequence& target);

/// Exhaustive path enumeration; +infinity when no path collapses to the
/// target. Throws ResourceLimit when (V+1)^T exceeds `max_paths`.
template <typename S>
double ctc_brute_force(const Tensor<S>& log_probs, const LabelSequence& target,
                       double max_paths = 1e7);

/// Best-path decoding: per-frame argmax (ties to the lowest index), then
/// collapse.
template <typename S>
LabelSequence greedy_decode(const Tensor<S>& log_probs);

/// CTC loss as a tape node over a [T, V+1] log-probability node.
template <typename S>
Var ctc_loss(Tape<S>& tape, Var log_probs, const LabelSequence& target);

}  // namespace accdat

#endif  // ACCDAT_CTC_H_
