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

#include "accdat/optim.h"

#include <cmath>
#include <unordered_map>

#include "accdat/error.h"

namespace accdat {
namespace {

template <typename S>
std::unordered_map<std::string, Parameter<S>*> index_params(
    const std::vector<Parameter<S>*>& params) {
  std::unordered_map<std::string, Parameter<S>*> index;
  for (auto* p : params) index.emplace(p->name, p);
  return index;
}

// Resolves every gradient to its parameter; rejects unknown names, shape
// mismatches and non-finite values before anything is modified.
template <typename S>
std::vector<std::pair<Parameter<S>*, const Tensor<S>*>> match(
    const std::vector<Parameter<S>*>& params, const GradientMap<S>& grads, const char* op) {
  const auto index = index_params(params);
  std::vector<std::pair<Parameter<S>*, const Tensor<S>*>> out;
  out.reserve(grads.size());
  for (const auto& [name, g] : grads) {
    auto it = index.find(name);
    if (it == index.end()) {
      throw InvalidArgument(std::string(op) + ": gradient for unknown parameter '" + name + "'");
    }
    Parameter<S>* p = it->second;
    if (g.shape() != p->value.shape()) {
      throw InvalidArgument(std::string(op) + ": gradient shape " + shape_string(g.shape()) +
                            " does not match parameter '" + name + "' " +
                            shape_string(p->value.shape()));
    }
    for (S v : g.data()) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError(std::string(op) + ": non-finite gradient for parameter '" + name + "'");
      }
    }
    out.emplace_back(p, &g);
  }
  return out;
}

}  // namespace

std::string optimizer_kind_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "novograd";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "novograd") return OptimizerKind::kNovoGrad;
  throw ConfigError("unknown optimizer kind '" + name + "' (expected sgd or novograd)");
}

void validate_optimizer_config(const OptimizerConfig& c, const std::string& path) {
  if (!(c.lr > 0) || !std::isfinite(c.lr)) throw ConfigError(path + ".lr: must be > 0");
  if (!(c.beta1 >= 0 && c.beta1 < 1)) throw ConfigError(path + ".beta1: must be in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) throw ConfigError(path + ".beta2: must be in [0, 1)");
  if (!(c.eps >= 0)) throw ConfigError(path + ".eps: must be >= 0");
  if (!(c.weight_decay >= 0)) throw ConfigError(path + ".weight_decay: must be >= 0");
}

template <typename S>
void sgd_step(const std::vector<Parameter<S>*>& params, const GradientMap<S>& grads, double mu) {
  for (auto [p, g] : match(params, grads, "sgd_step")) {
    if (!p->trainable) continue;
    auto theta = p->value.data();
    auto gd = g->data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] = static_cast<S>(theta[i] - mu * gd[i]);
    }
  }
}

template <typename S>
void novograd_step(OptimizerState<S>& state, const std::vector<Parameter<S>*>& params,
                   const GradientMap<S>& grads) {
  if (state.config.kind != OptimizerKind::kNovoGrad) {
    throw InvalidArgument("novograd_step: optimizer state is not novograd");
  }
  const auto index = index_params(params);
  for (const auto& [name, m] : state.first_moment) {
    auto it = index.find(name);
    if (it == index.end() || it->second->value.shape() != m.shape()) {
      throw InvalidArgument("novograd_step: optimizer state entry '" + name +
                            "' does not match any parameter");
    }
  }
  const auto& c = state.config;
  for (auto [p, g] : match(params, grads, "novograd_step")) {
    if (!p->trainable) continue;
    auto gd = g->data();
    double norm2 = 0;
    for (S v : gd) norm2 += static_cast<double>(v) * static_cast<double>(v);
    auto [vit, fresh] = state.second_moment.try_emplace(p->name, norm2);
    if (!fresh) vit->second = c.beta2 * vit->second + (1.0 - c.beta2) * norm2;
    const double denom = std::sqrt(vit->second) + c.eps;
    auto mit = state.first_moment.try_emplace(p->name, Tensor<S>(p->value.shape())).first;
    auto m = mit->second.data();
    auto theta = p->value.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double direction = (denom > 0 ? gd[i] / denom : 0.0) + c.weight_decay * theta[i];
      m[i] = static_cast<S>(c.beta1 * m[i] + direction);
      theta[i] = static_cast<S>(theta[i] - c.lr * m[i]);
    }
  }
}

template <typename S>
void optimizer_step(OptimizerState<S>& state, const std::vector<Parameter<S>*>& params,
                    const GradientMap<S>& grads) {
  if (state.config.kind == OptimizerKind::kSgd) {
    sgd_step(params, grads, state.config.lr);
  } else {
    novograd_step(state, params, grads);
  }
  ++state.steps;
}

void validate_lambda_schedule(const LambdaSchedule& s, const std::string& path) {
  if (!(s.lambda_max >= 0) || !std::isfinite(s.lambda_max)) {
    throw ConfigError(path + ".lambda_max: must be >= 0");
  }
  if (!(s.gamma > 0) || !std::isfinite(s.gamma)) throw ConfigError(path + ".gamma: must be > 0");
}

double lambda_schedule(double progress, const LambdaSchedule& schedule) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw InvalidArgument("lambda_schedule: progress must be in [0, 1]");
  }
  validate_lambda_schedule(schedule);
  if (progress == 0.0) return 0.0;
  return schedule.lambda_max * (2.0 / (1.0 + std::exp(-schedule.gamma * progress)) - 1.0);
}

#define ACCDAT_INSTANTIATE_OPTIM(S)                                                             \
  template struct OptimizerState<S>;                                                            \
  template void sgd_step<S>(const std::vector<Parameter<S>*>&, const GradientMap<S>&, double);  \
  template void novograd_step<S>(OptimizerState<S>&, const std::vector<Parameter<S>*>&,         \
                                 const GradientMap<S>&);                                        \
  template void optimizer_step<S>(OptimizerState<S>&, const std::vector<Parameter<S>*>&,        \
                                  const GradientMap<S>&);

ACCDAT_INSTANTIATE_OPTIM(float)
ACCDAT_INSTANTIATE_OPTIM(double)

}  // namespace accdat
