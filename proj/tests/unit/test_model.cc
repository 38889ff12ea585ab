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

#include "accdat/ctc.h"
#include "accdat/error.h"
#include "accdat/gradcheck.h"
#include "accdat/model.h"
#include "test_support.h"

using namespace accdat;
using T64 = Tensor<double>;

namespace {

ModelConfig mini() { return mini_model_config(16, 8, 3); }

bool all_zero(const T64& t) {
  for (double v : t.data()) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("quartznet15x5 layer table") {
  const auto c = quartznet15x5_config(64, 28, 7);
  REQUIRE(c.encoder_blocks.size() == 8);
  const int kernels[] = {33, 33, 39, 51, 63, 75, 87, 1};
  const int channels[] = {256, 256, 256, 512, 512, 512, 512, 1024};
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(c.encoder_blocks[i].kernel == kernels[i]);
    CHECK(c.encoder_blocks[i].channels == channels[i]);
  }
  CHECK(c.encoder_blocks[0].stride == 2);
  CHECK(c.decoder_block.kernel == 1);
  CHECK(c.decoder_block.dilation == 2);
  CHECK(c.decoder_block.channels == 29);
  CHECK(c.disc_hidden == std::vector<int>{512, 1024, 1024});
  const auto warnings = validate_model_config(c);
  CHECK(warnings.size() == 1);  // dilation on a K=1 decoder has no effect
}

TEST_CASE("model config: inconsistent chaining is a config error") {
  auto c = mini();
  c.encoder_blocks[2].in_channels = 17;
  CHECK_THROWS_AS(validate_model_config(c), ConfigError);
  auto d = mini();
  d.encoder_blocks[1].stride = 2;
  CHECK_THROWS_AS(validate_model_config(d), ConfigError);
  CHECK(model_config_to_json(model_config_from_json(model_config_to_json(mini()))) ==
        model_config_to_json(mini()));
}

TEST_CASE("build_model is deterministic in the seed") {
  Rng a(5), b(5), c(6);
  const auto pa = build_model<double>(mini(), a);
  const auto pb = build_model<double>(mini(), b);
  const auto pc = build_model<double>(mini(), c);
  const auto all_a = pa.all();
  const auto all_b = pb.all();
  REQUIRE(all_a.size() == all_b.size());
  bool differs = false;
  for (std::size_t i = 0; i < all_a.size(); ++i) {
    CHECK(all_a[i]->name == all_b[i]->name);
    CHECK(bitwise_equal(all_a[i]->value, all_b[i]->value));
    differs = differs || !bitwise_equal(all_a[i]->value, pc.all()[i]->value);
  }
  CHECK(differs);
  Rng d(5);
  CHECK_FALSE(build_model<double>(mini(), d, false).has_discriminator());
}

TEST_CASE("encoder: output length ceil(T/2) and eval determinism") {
  Rng rng(7);
  auto params = build_model<double>(mini(), rng);
  for (std::size_t frames : {31u, 32u, 33u}) {
    Tape<double> tape;
    const Var f = encoder_forward(tape, params, tape.constant(testing::random_tensor({16, frames}, rng)),
                                  Mode::kTrain);
    CHECK(tape.shape(f) == Shape{64, (frames + 1) / 2});
  }
  const T64 x = testing::random_tensor({16, 32}, rng);
  Tape<double> t1, t2;
  const T64 e1 = t1.value(encoder_forward(t1, params, t1.constant(x), Mode::kEval));
  const T64 e2 = t2.value(encoder_forward(t2, params, t2.constant(x), Mode::kEval));
  CHECK(bitwise_equal(e1, e2));
  Tape<double> t3;
  CHECK_THROWS_AS(encoder_forward(t3, params, t3.constant(T64({15, 32})), Mode::kEval), InvalidArgument);
}

TEST_CASE("encoder: zero input gives zero output") {
  Rng rng(8);
  auto params = build_model<double>(mini(), rng);
  Tape<double> tape;
  const Var f = encoder_forward(tape, params, tape.constant(T64({16, 20})), Mode::kTrain);
  CHECK(all_zero(tape.value(f)));
}

TEST_CASE("decoder: normalized rows, uniform at zero features, gradient partition") {
  Rng rng(9);
  auto params = build_model<double>(mini(), rng);
  Tape<double> tape;
  const Var lp = decoder_forward(tape, params, tape.constant(T64({64, 5})));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      s += std::exp(tape.value(lp).at(r, c));
      CHECK(tape.value(lp).at(r, c) == doctest::Approx(-std::log(9.0)).epsilon(1e-12));
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  Tape<double> t2;
  const Var f = encoder_forward(t2, params, t2.constant(testing::random_tensor({16, 24}, rng)), Mode::kTrain);
  Rng drop(1);
  discriminator_forward(t2, params, f, std::optional<double>(1.0), Mode::kTrain, drop);
  const auto grads = backward(t2, ctc_loss(t2, decoder_forward(t2, params, f), {1, 2, 0, 3}));
  bool encoder_reached = false, decoder_reached = false;
  for (const auto& [name, g] : grads) {
    if (params.discriminator.find(name)) CHECK(all_zero(g));
    if (params.encoder.find(name)) encoder_reached = encoder_reached || !all_zero(g);
    if (params.decoder.find(name)) decoder_reached = decoder_reached || !all_zero(g);
  }
  CHECK(encoder_reached);
  CHECK(decoder_reached);
}

TEST_CASE("discriminator: forward independent of lambda; reversed encoder gradient") {
  Rng rng(10);
  auto params = build_model<double>(mini(), rng);
  const T64 x = testing::random_tensor({16, 20}, rng);
  auto run = [&](std::optional<double> lambda, T64* out) {
    Tape<double> tape;
    const Var f = encoder_forward(tape, params, tape.constant(x), Mode::kTrain);
    Rng drop(3);
    const Var scores = discriminator_forward(tape, params, f, lambda, Mode::kTrain, drop);
    *out = tape.value(scores);
    return backward(tape, pick(tape, scores, 1));
  };
  T64 s_plain, s_half, s_two;
  const auto g_plain = run(std::nullopt, &s_plain);
  const auto g_half = run(0.5, &s_half);
  const auto g_two = run(2.0, &s_two);
  CHECK(bitwise_equal(s_plain, s_half));
  CHECK(bitwise_equal(s_plain, s_two));
  CHECK(s_plain.shape() == Shape{3});
  double worst = 0;
  for (const auto& [name, g] : g_plain) {
    if (params.discriminator.find(name)) {
      CHECK(bitwise_equal(g, g_half.at(name)));  // classifier gradient is not reversed
      continue;
    }
    for (std::size_t i = 0; i < g.numel(); ++i) {
      worst = std::max(worst, std::abs(g_half.at(name)[i] + 0.5 * g[i]));
      worst = std::max(worst, std::abs(g_two.at(name)[i] + 2.0 * g[i]));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("discriminator: eval mode is deterministic") {
  Rng rng(11);
  auto params = build_model<double>(mini(), rng);
  Tape<double> tape;
  const Var pooled = tape.constant(testing::random_tensor({64}, rng));
  Rng r1(1), r2(2);
  const T64 a = tape.value(discriminator_head(tape, params, pooled, Mode::kEval, r1));
  const T64 b = tape.value(discriminator_head(tape, params, pooled, Mode::kEval, r2));
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("mini model CTC + CE composite loss matches finite differences") {
  auto cfg = mini_model_config(4, 3, 2);
  cfg.encoder_blocks[0].channels = cfg.encoder_blocks[1].channels = cfg.encoder_blocks[2].channels = 6;
  cfg.encoder_blocks[3].channels = 8;
  cfg.disc_hidden = {6, 5, 5};
  cfg.disc_dropout = 0.0;
  Rng rng(12);
  auto params = build_model<double>(cfg, rng);
  const T64 x1 = testing::random_tensor({4, 12}, rng);
  const T64 x2 = testing::random_tensor({4, 10}, rng);
  auto loss = [&](Tape<double>& tape) {
    const Var ins[2] = {tape.constant(x1), tape.constant(x2)};
    const auto fs = encoder_forward(tape, params, std::span<const Var>(ins), Mode::kTrain);
    Rng drop(4);
    const Var ctc = ctc_loss(tape, decoder_forward(tape, params, fs[0]), {1, 0, 2});
    const Var ce0 = pick(tape, discriminator_forward(tape, params, fs[0], std::optional<double>(),
                                                     Mode::kTrain, drop), 0);
    const Var ce1 = pick(tape, discriminator_forward(tape, params, fs[1], std::optional<double>(),
                                                     Mode::kTrain, drop), 1);
    return add(tape, ctc, scale(tape, add(tape, ce0, ce1), -1.0));
  };
  // No reversal here, so the tape gradient is the gradient of the evaluated
  // function. Running statistics are updated on each call but never read in
  // train mode.
  const auto r = check_parameter_gradients(loss, params.all(), 6, 77);
  CHECK(r.max_rel_error < 1e-4);
}
