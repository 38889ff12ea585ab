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

#include "accdat/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "accdat/rng.h"

namespace accdat {
namespace {

void record(GradCheckResult& r, double analytic, double numeric, double floor,
            const std::string& label) {
  const double abs_err = std::fabs(analytic - numeric);
  const double rel_err = abs_err / std::max({std::fabs(analytic), std::fabs(numeric), floor});
  ++r.coordinates;
  r.max_abs_error = std::max(r.max_abs_error, abs_err);
  if (rel_err >= r.max_rel_error) {
    r.max_rel_error = rel_err;
    r.worst = label;
  }
}

double eval_scalar(const std::function<Var(Tape<double>&)>& loss) {
  Tape<double> tape;
  return tape.value(loss(tape)).item();
}

}  // namespace

GradCheckResult check_input_gradient(const std::function<Var(Tape<double>&, Var)>& f,
                                     const Tensor<double>& point, double eps, double floor) {
  Tape<double> tape;
  Var x = tape.variable(point);
  Var y = f(tape, x);
  tape.backward(y);
  const Tensor<double> analytic = tape.grad(x);

  GradCheckResult r;
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    Tape<double> tp;
    const double fp = tp.value(f(tp, tp.variable(probe))).item();
    probe[i] = orig - eps;
    Tape<double> tm;
    const double fm = tm.value(f(tm, tm.variable(probe))).item();
    probe[i] = orig;
    record(r, analytic[i], (fp - fm) / (2 * eps), floor, "x[" + std::to_string(i) + "]");
  }
  return r;
}

GradCheckResult check_parameter_gradients(const std::function<Var(Tape<double>&)>& loss,
                                          const std::vector<Parameter<double>*>& params,
                                          std::size_t coords_per_param, std::uint64_t seed,
                                          double eps, double floor) {
  GradientMap<double> analytic;
  {
    Tape<double> tape;
    analytic = backward(tape, loss(tape));
  }
  Rng rng(seed);
  GradCheckResult r;
  for (Parameter<double>* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->value.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (coords_per_param > 0 && coords_per_param < n) {
      for (std::size_t i = 0; i < coords_per_param; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(coords_per_param);
    }
    auto it = analytic.find(p->name);
    for (std::size_t c : coords) {
      const double a = it == analytic.end() ? 0.0 : it->second[c];
      const double orig = p->value[c];
      p->value[c] = orig + eps;
      const double fp = eval_scalar(loss);
      p->value[c] = orig - eps;
      const double fm = eval_scalar(loss);
      p->value[c] = orig;
      record(r, a, (fp - fm) / (2 * eps), floor, p->name + "[" + std::to_string(c) + "]");
    }
  }
  return r;
}

}  // namespace accdat
