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

#ifndef ACCDAT_OPS_H_
#define ACCDAT_OPS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "accdat/rng.h"
#include "accdat/tape.h"

namespace accdat {

enum class Mode { kTrain, kEval };
enum class ConvMode { kDepthwise, kPointwise };

/// Output length of a "same"-padded convolution: ceil(T / stride).
inline std::size_t conv_output_length(std::size_t frames, std::size_t stride) {
  return (frames + stride - 1) / stride;
}

/// 1-D convolution over [C, T] (or batched [B, C, T]) inputs with zero
/// "same" padding. Depthwise kernels are [C, K]; pointwise kernels are
/// [C_out, C_in] and ignore stride/dilation beyond subsampling.
template <typename S>
Var conv1d(Tape<S>& tape, Var input, Var kernel, ConvMode mode,
           std::size_t stride = 1, std::size_t dilation = 1);

/// Adds a per-channel bias [C] to a [C, T] input.
template <typename S>
Var bias_add(Tape<S>& tape, Var input, Var bias);

template <typename S>
struct BatchNormState {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  std::uint64_t batches_tracked = 0;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}), running_var(Shape{channels}, S(1)) {}
  bool initialized() const { return batches_tracked > 0; }
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Selects the inputs of a group that define train-mode statistics; an empty
/// mask selects all of them.
using InputMask = std::vector<std::uint8_t>;

/// Batch normalization over a group of [C, T_i] inputs. Train mode pools
/// statistics over every frame of the inputs selected by `statistics` and,
/// when `state` is given, folds them into the running statistics (the first
/// batch initializes them). Every input is normalized with those statistics.
/// Eval mode normalizes with the running statistics.
template <typename S>
std::vector<Var> batchnorm1d(Tape<S>& tape, std::span<const Var> inputs, Var gamma,
                             Var beta, BatchNormState<S>* state, Mode mode,
                             const BatchNormOptions& options = {},
                             const InputMask& statistics = {});

template <typename S>
Var batchnorm1d(Tape<S>& tape, Var input, Var gamma, Var beta,
                BatchNormState<S>* state, Mode mode,
                const BatchNormOptions& options = {});

/// weight [D_out, D_in] times input [D_in] plus bias [D_out].
template <typename S>
Var linear(Tape<S>& tape, Var input, Var weight, Var bias);

template <typename S>
Var relu(Tape<S>& tape, Var input);

template <typename S>
Var add(Tape<S>& tape, Var a, Var b);

template <typename S>
Var scale(Tape<S>& tape, Var input, S factor);

/// Inverted dropout: survivors are scaled by 1/(1-p) in train mode; eval
/// mode and p == 0 are the identity. The mask is drawn from `rng` only.
template <typename S>
Var dropout(Tape<S>& tape, Var input, double p, Mode mode, Rng& rng);

/// Per-channel mean over the last (time) axis: [C, T] -> [C].
template <typename S>
Var mean_over_time(Tape<S>& tape, Var input);

/// x - logsumexp(x) along the last axis.
template <typename S>
Var log_softmax(Tape<S>& tape, Var input);

/// [R, C] -> [C, R].
template <typename S>
Var transpose(Tape<S>& tape, Var input);

/// Sum of all elements, as a scalar.
template <typename S>
Var sum(Tape<S>& tape, Var input);

/// Element `index` of a rank-1 tensor, as a scalar.
template <typename S>
Var pick(Tape<S>& tape, Var input, std::size_t index);

/// Σ weights[i] * scalars[i].
template <typename S>
Var weighted_sum(Tape<S>& tape, std::span<const Var> scalars, std::span<const S> weights);

/// Gradient reversal: identity forward, upstream gradient times -lambda
/// backward.
template <typename S>
Var grl(Tape<S>& tape, Var input, S lambda);

}  // namespace accdat

#endif  // ACCDAT_OPS_H_
