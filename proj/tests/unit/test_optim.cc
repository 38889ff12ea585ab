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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "accdat/error.h"
#include "accdat/optim.h"
#include "test_support.h"

using namespace accdat;
using T64 = Tensor<double>;

namespace {

double norm(const T64& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("sgd: examples") {
  Parameter<double> p{"w", T64({2}, 1.0)};
  sgd_step<double>({&p}, {{"w", T64({2}, 0.5)}}, 0.1);
  CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-15));
  const T64 before = p.value;
  sgd_step<double>({&p}, {{"w", T64({2})}}, 0.1);
  CHECK(bitwise_equal(p.value, before));
  sgd_step<double>({&p}, {}, 0.1);
  CHECK(bitwise_equal(p.value, before));
}

TEST_CASE("sgd: two steps equal one step with the summed gradient") {
  Rng rng(1);
  const T64 g1 = testing::random_tensor({5}, rng);
  const T64 g2 = testing::random_tensor({5}, rng);
  T64 sum = g1;
  for (std::size_t i = 0; i < 5; ++i) sum[i] += g2[i];
  Parameter<double> a{"w", T64({5}, 0.3)};
  Parameter<double> b = a;
  sgd_step<double>({&a}, {{"w", g1}}, 0.01);
  sgd_step<double>({&a}, {{"w", g2}}, 0.01);
  sgd_step<double>({&b}, {{"w", sum}}, 0.01);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.value[i] == doctest::Approx(b.value[i]).epsilon(1e-14));
}

TEST_CASE("novograd: first step is lr * g / |g| with beta1 = 0, wd = 0") {
  Rng rng(2);
  OptimizerState<double> state;
  state.config.beta1 = 0.0;
  state.config.weight_decay = 0.0;
  state.config.eps = 0.0;
  state.config.lr = 0.05;
  const T64 g = testing::random_tensor({3, 4}, rng);
  Parameter<double> p{"w", testing::random_tensor({3, 4}, rng)};
  const T64 before = p.value;
  optimizer_step<double>(state, {&p}, {{"w", g}});
  const double n = norm(g);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    CHECK(before[i] - p.value[i] == doctest::Approx(0.05 * g[i] / n).epsilon(1e-12));
  }
  CHECK(state.steps == 1);
  CHECK(state.second_moment.at("w") == doctest::Approx(n * n));
}

TEST_CASE("novograd: first-step update is invariant to gradient scale") {
  Rng rng(3);
  const T64 g = testing::random_tensor({6}, rng);
  T64 g10 = g;
  for (auto& v : g10.data()) v *= 10;
  auto step = [](const T64& grad) {
    OptimizerState<double> s;
    s.config.eps = 0.0;
    Parameter<double> p{"w", T64({6}, 0.5)};
    optimizer_step<double>(s, {&p}, {{"w", grad}});
    return p.value;
  };
  const T64 a = step(g);
  const T64 b = step(g10);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("novograd: second moment recursion and weight decay") {
  OptimizerState<double> s;
  s.config.beta1 = 0.9;
  s.config.beta2 = 0.5;
  s.config.eps = 0.0;
  s.config.weight_decay = 0.1;
  s.config.lr = 0.1;
  Parameter<double> p{"w", T64({1}, 2.0)};
  optimizer_step<double>(s, {&p}, {{"w", T64({1}, 3.0)}});
  // v = 9, m = 3/3 + 0.1 * 2 = 1.2, theta = 2 - 0.12
  CHECK(s.second_moment.at("w") == doctest::Approx(9.0));
  CHECK(p.value[0] == doctest::Approx(1.88).epsilon(1e-14));
  optimizer_step<double>(s, {&p}, {{"w", T64({1}, 1.0)}});
  // v = 0.5 * 9 + 0.5 * 1 = 5, m = 0.9 * 1.2 + 1/sqrt(5) + 0.1 * 1.88
  const double m = 0.9 * 1.2 + 1.0 / std::sqrt(5.0) + 0.188;
  CHECK(s.second_moment.at("w") == doctest::Approx(5.0));
  CHECK(p.value[0] == doctest::Approx(1.88 - 0.1 * m).epsilon(1e-14));
}

TEST_CASE("novograd: zero gradient and zero decay leave parameters unchanged") {
  OptimizerState<double> s;
  s.config.weight_decay = 0.0;
  Parameter<double> p{"w", T64({3}, 0.25)};
  const T64 before = p.value;
  optimizer_step<double>(s, {&p}, {{"w", T64({3})}});
  CHECK(bitwise_equal(p.value, before));
}

TEST_CASE("novograd: absent or frozen parameters keep values and moments") {
  OptimizerState<double> s;
  Parameter<double> a{"a", T64({2}, 1.0)};
  Parameter<double> b{"b", T64({2}, 1.0), false};
  optimizer_step<double>(s, {&a, &b}, {{"a", T64({2}, 1.0)}, {"b", T64({2}, 1.0)}});
  CHECK(a.value[0] != 1.0);
  CHECK(b.value[0] == 1.0);
  CHECK(s.second_moment.count("b") == 0);
  const double va = s.second_moment.at("a");
  optimizer_step<double>(s, {&a}, {});
  CHECK(s.second_moment.at("a") == va);
}

TEST_CASE("novograd: NaN gradient is a numeric error") {
  OptimizerState<double> s;
  Parameter<double> p{"w", T64({1}, 1.0)};
  CHECK_THROWS_AS(optimizer_step<double>(s, {&p}, {{"w", T64({1}, std::nan(""))}}), NumericError);
}

TEST_CASE("optimizer config validation names the field") {
  OptimizerConfig c;
  c.lr = -1;
  try {
    validate_optimizer_config(c, "train.optimizer");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.optimizer.lr") != std::string::npos);
  }
  CHECK(parse_optimizer_kind("sgd") == OptimizerKind::kSgd);
  CHECK(optimizer_kind_name(OptimizerKind::kNovoGrad) == "novograd");
  CHECK_THROWS_AS(parse_optimizer_kind("adam"), ConfigError);
}

TEST_CASE("lambda schedule anchors") {
  const LambdaSchedule s{1.0, 10.0};
  CHECK(lambda_schedule(0.0, s) == 0.0);
  const double expect = 2.0 / (1.0 + std::exp(-5.0)) - 1.0;
  CHECK(std::abs(lambda_schedule(0.5, s) - expect) < 1e-15);
  CHECK(std::abs(lambda_schedule(0.5, s) - 0.98661) < 1e-5);
  CHECK(lambda_schedule(1.0, {0.3, 1000.0}) == doctest::Approx(0.3));
  double prev = -1;
  for (int i = 0; i <= 999; ++i) {
    const double v = lambda_schedule(i / 999.0, {0.7, 3.0});
    CHECK(v >= prev);
    prev = v;
  }
  LambdaSchedule bad{1.0, 0.0};
  try {
    validate_lambda_schedule(bad, "train.lambda_schedule");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()) == "train.lambda_schedule.gamma: must be > 0");
  }
}
