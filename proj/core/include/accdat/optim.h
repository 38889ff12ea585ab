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

#ifndef ACCDAT_OPTIM_H_
#define ACCDAT_OPTIM_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "accdat/tape.h"

namespace accdat {

enum class OptimizerKind { kSgd, kNovoGrad };

std::string optimizer_kind_name(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kNovoGrad;
  double lr = 0.01;
  double beta1 = 0.95;
  double beta2 = 0.5;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

/// Throws ConfigError naming `path` + field on an invalid setting.
void validate_optimizer_config(const OptimizerConfig& config, const std::string& path = "optimizer");

/// Moments keyed by parameter name. One NovoGrad second moment per named
/// tensor; entries appear on a parameter's first update.
template <typename S>
struct OptimizerState {
  OptimizerConfig config;
  std::map<std::string, Tensor<S>> first_moment;
  std::map<std::string, double> second_moment;
  std::uint64_t steps = 0;
};

/// theta <- theta - mu * g for every gradient supplied; parameters without a
/// gradient are left untouched.
template <typename S>
void sgd_step(const std::vector<Parameter<S>*>& params, const GradientMap<S>& grads, double mu);

/// Layer-wise normalized momentum update. Parameters absent from `grads`
/// (or frozen) keep their value and their moments.
template <typename S>
void novograd_step(OptimizerState<S>& state, const std::vector<Parameter<S>*>& params,
                   const GradientMap<S>& grads);

/// Dispatches on `state.config.kind` and counts the step.
template <typename S>
void optimizer_step(OptimizerState<S>& state, const std::vector<Parameter<S>*>& params,
                    const GradientMap<S>& grads);

struct LambdaSchedule {
  double lambda_max = 1.0;
  double gamma = 10.0;
};

void validate_lambda_schedule(const LambdaSchedule& schedule,
                              const std::string& path = "lambda_schedule");

/// lambda_max * (2 / (1 + exp(-gamma p)) - 1) for p in [0, 1].
double lambda_schedule(double progress, const LambdaSchedule& schedule);

}  // namespace accdat

#endif  // ACCDAT_OPTIM_H_
