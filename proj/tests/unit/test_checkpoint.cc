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

#include <fstream>

#include "accdat/checkpoint.h"
#include "accdat/error.h"
#include "accdat/optim.h"
#include "test_support.h"

using namespace accdat;
namespace fs = std::filesystem;

namespace {

template <typename S>
Checkpoint<S> sample_checkpoint() {
  Rng rng(31);
  Checkpoint<S> ck;
  ck.regime = "dat";
  ck.lineage = {"pretrain_base", "dat"};
  ck.config_digest = "abc123";
  ck.progress = {17, 2, 3, "train"};
  ck.params = build_model<S>(mini_model_config(16, 8, 3), rng);
  for (auto& [name, bn] : ck.params.batch_norm) {
    bn.batches_tracked = 5;
    bn.running_mean.fill(S(0.25));
  }
  GradientMap<S> grads;
  for (auto* p : ck.params.all()) grads.emplace(p->name, Tensor<S>(p->value.shape(), S(0.01)));
  optimizer_step(ck.optimizer, ck.params.all(), grads);
  ck.rng_state = serialize_rng(rng);
  ck.metrics = nlohmann::json::array({{{"epoch", 0}, {"loss_ctc", 1.5}}});
  ck.accumulators = {{"loss_ctc_sum", 2.0}};
  return ck;
}

void expect_same(const Checkpoint<double>& a, const Checkpoint<double>& b) {
  CHECK(a.regime == b.regime);
  CHECK(a.lineage == b.lineage);
  CHECK(a.config_digest == b.config_digest);
  CHECK(a.progress.step == b.progress.step);
  CHECK(a.progress.epoch == b.progress.epoch);
  CHECK(a.progress.step_in_epoch == b.progress.step_in_epoch);
  CHECK(a.rng_state == b.rng_state);
  CHECK(a.metrics == b.metrics);
  CHECK(a.accumulators == b.accumulators);
  const auto pa = a.params.all();
  const auto pb = b.params.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->trainable == pb[i]->trainable);
    CHECK(bitwise_equal(pa[i]->value, pb[i]->value));
  }
  for (const auto& [name, bn] : a.params.batch_norm) {
    const auto& other = b.params.batch_norm.at(name);
    CHECK(bn.batches_tracked == other.batches_tracked);
    CHECK(bitwise_equal(bn.running_mean, other.running_mean));
    CHECK(bitwise_equal(bn.running_var, other.running_var));
  }
  CHECK(a.optimizer.steps == b.optimizer.steps);
  CHECK(a.optimizer.second_moment == b.optimizer.second_moment);
  REQUIRE(a.optimizer.first_moment.size() == b.optimizer.first_moment.size());
  for (const auto& [name, m] : a.optimizer.first_moment) {
    CHECK(bitwise_equal(m, b.optimizer.first_moment.at(name)));
  }
}

std::string bytes_of(const fs::path& dir) {
  return testing::slurp(dir / "meta.json") + testing::slurp(dir / "index.json") +
         testing::slurp(dir / "params.bin");
}

}  // namespace

TEST_CASE("checkpoint: round trip is bit-exact and save is a pure function") {
  testing::TempDir dir;
  const auto ck = sample_checkpoint<double>();
  save_checkpoint(dir / "a", ck);
  CHECK(checkpoint_dtype(dir / "a") == "f64");
  const auto back = load_checkpoint<double>(dir / "a");
  expect_same(ck, back);
  save_checkpoint(dir / "b", back);
  CHECK(bytes_of(dir / "a") == bytes_of(dir / "b"));
  CHECK(deserialize_rng(back.rng_state) == deserialize_rng(ck.rng_state));
}

TEST_CASE("checkpoint: f32 tensors load into a 64-bit model") {
  testing::TempDir dir;
  const auto ck = sample_checkpoint<float>();
  save_checkpoint(dir / "f", ck);
  CHECK(checkpoint_dtype(dir / "f") == "f32");
  const auto wide = load_checkpoint<double>(dir / "f");
  const auto narrow = ck.params.all();
  const auto converted = wide.params.all();
  for (std::size_t i = 0; i < narrow.size(); ++i) {
    CHECK(bitwise_equal(converted[i]->value.template cast<float>(), narrow[i]->value));
  }
}

TEST_CASE("checkpoint: truncated params.bin is a format error") {
  testing::TempDir dir;
  save_checkpoint(dir / "c", sample_checkpoint<double>());
  const std::string blob = testing::slurp(dir / "c" / "params.bin");
  std::ofstream(dir / "c" / "params.bin", std::ios::binary | std::ios::trunc)
      << blob.substr(0, blob.size() / 2);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "c"), FormatError);
}

TEST_CASE("checkpoint: truncated meta and version mismatch are format errors") {
  testing::TempDir dir;
  save_checkpoint(dir / "m", sample_checkpoint<double>());
  const std::string meta = testing::slurp(dir / "m" / "meta.json");
  std::ofstream(dir / "m" / "meta.json", std::ios::trunc) << meta.substr(0, meta.size() / 3);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "m"), FormatError);

  save_checkpoint(dir / "v", sample_checkpoint<double>());
  auto j = nlohmann::json::parse(testing::slurp(dir / "v" / "meta.json"));
  j["format_version"] = kCheckpointFormatVersion + 1;
  std::ofstream(dir / "v" / "meta.json", std::ios::trunc) << j.dump(1);
  try {
    load_checkpoint<double>(dir / "v");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "missing"), DataError);
}

TEST_CASE("checkpoint: frozen flags survive the round trip") {
  testing::TempDir dir;
  auto ck = sample_checkpoint<double>();
  ck.params.encoder.set_trainable(false);
  save_checkpoint(dir / "z", ck);
  const auto back = load_checkpoint<double>(dir / "z");
  for (const auto& p : back.params.encoder) CHECK_FALSE(p.trainable);
  for (const auto& p : back.params.decoder) CHECK(p.trainable);
}
