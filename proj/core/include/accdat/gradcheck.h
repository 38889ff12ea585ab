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

#ifndef ACCDAT_GRADCHECK_H_
#define ACCDAT_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "accdat/tape.h"

namespace accdat {

/// Worst disagreement between tape gradients and central differences.
/// Relative error is |a - n| / max(|a|, |n|, floor).
struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "<name>[<index>]" of the worst coordinate
};

/// Checks d f(x) / d x for a scalar-valued f built on a fresh 64-bit tape
/// at `point`. Every coordinate is perturbed. The default step sits near
/// cbrt(machine epsilon), where truncation and round-off errors balance.
GradCheckResult check_input_gradient(const std::function<Var(Tape<double>&, Var)>& f,
                                     const Tensor<double>& point, double eps = 1e-5,
                                     double floor = 1e-6);

/// Checks a loss over named parameters. `loss` must rebuild the graph from
/// the current parameter values on each call and be deterministic (reseed
/// any dropout inside it). Up to `coords_per_param` coordinates of each
/// trainable parameter are sampled with `seed`; 0 means all.
GradCheckResult check_parameter_gradients(const std::function<Var(Tape<double>&)>& loss,
                                          const std::vector<Parameter<double>*>& params,
                                          std::size_t coords_per_param, std::uint64_t seed,
                                          double eps = 1e-5, double floor = 1e-6);

}  // namespace accdat

#endif  // ACCDAT_GRADCHECK_H_
