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

#include "accdat/checkpoint.h"
#include "accdat/ctc.h"
#include "accdat/error.h"
#include "accdat/experiment.h"
#include "accdat/train.h"
#include "test_support.h"

using namespace accdat;
using T64 = Tensor<double>;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(int n_accents = 3) {
  auto c = mini_model_config(16, 8, n_accents);
  c.encoder_blocks[0].channels = c.encoder_blocks[1].channels = c.encoder_blocks[2].channels = 8;
  c.encoder_blocks[3].channels = 12;
  c.disc_hidden = {8, 8, 8};
  return c;
}

std::vector<Utterance> toy_utterances(int n_accents, int per_accent, std::uint64_t seed) {
  CorpusSettings s;
  s.accent_counts.assign(static_cast<std::size_t>(n_accents), per_accent);
  s.accent_names.resize(s.accent_counts.size(), "x");
  s.seed = seed;
  return generate_utterances(new_corpus_config(s));
}

Batch make_batch(const std::vector<Utterance>& utts, const std::vector<std::size_t>& pick,
                 bool annotate_accent0 = true) {
  Batch b;
  for (std::size_t i : pick) b.push_back({&utts[i], annotate_accent0 && utts[i].accent_id == 0});
  return b;
}

bool same_values(const ParameterSet<double>& a, const ParameterSet<double>& b) {
  auto ib = b.begin();
  for (const auto& p : a) {
    if (!bitwise_equal(p.value, (ib++)->value)) return false;
  }
  return true;
}

OptimizerState<double> sgd(double lr) {
  OptimizerState<double> s;
  s.config.kind = OptimizerKind::kSgd;
  s.config.lr = lr;
  return s;
}

// Pure CTC step on the annotated samples of `batch`, normalized by the full
// batch size, written against the model API directly.
void manual_ctc_step(ModelParams<double>& params, const Batch& batch, double lr) {
  Tape<double> tape;
  std::vector<Var> inputs;
  std::vector<const Utterance*> used;
  for (const auto& item : batch) {
    if (!item.annotated) continue;
    inputs.push_back(tape.constant(item.utterance->features.cast<double>()));
    used.push_back(item.utterance);
  }
  const auto feats = encoder_forward(tape, params, std::span<const Var>(inputs), Mode::kTrain);
  std::vector<Var> losses;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    losses.push_back(ctc_loss(tape, decoder_forward(tape, params, feats[i]), *used[i]->labels));
  }
  const std::vector<double> w(losses.size(), 1.0 / static_cast<double>(batch.size()));
  const auto grads = backward(tape, weighted_sum(tape, std::span<const Var>(losses),
                                                 std::span<const double>(w)));
  sgd_step(params.all(), grads, lr);
}

}  // namespace

TEST_CASE("regime names and properties") {
  for (auto r : {Regime::kPretrainBase, Regime::kCtcRetune, Regime::kDat, Regime::kAccptDat}) {
    CHECK(parse_regime(regime_name(r)) == r);
  }
  CHECK_THROWS_AS(parse_regime("adversarial"), ConfigError);
  CHECK_FALSE(regime_uses_discriminator(Regime::kCtcRetune));
  CHECK(regime_uses_discriminator(Regime::kAccptDat));
  CHECK_FALSE(regime_requires_init(Regime::kPretrainBase));
  CHECK(regime_requires_init(Regime::kDat));
}

TEST_CASE("statistics mask: annotated samples, else all") {
  const auto utts = toy_utterances(2, 2, 1);
  CHECK(dat_statistics_mask(make_batch(utts, {0, 2, 1})) == InputMask{1, 0, 1});
  CHECK(dat_statistics_mask(make_batch(utts, {2, 3})) == InputMask{1, 1});
}

TEST_CASE("dat_step with lambda = 0 equals a pure CTC step on annotated samples") {
  const auto utts = toy_utterances(3, 4, 2);
  Rng init(3);
  auto a = build_model<double>(tiny_model(), init);
  auto b = a;
  const Batch batch = make_batch(utts, {0, 5, 1, 9, 6});
  auto opt = sgd(0.05);
  Rng rng(4);
  const auto losses = dat_step(a, opt, batch, 0.0, {}, rng);
  manual_ctc_step(b, batch, 0.05);
  CHECK(losses.annotated == 2);
  CHECK(losses.total == 5);
  CHECK(same_values(a.discriminator, b.discriminator));
  double worst = 0;
  const auto pa = a.all();
  const auto pb = b.all();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t k = 0; k < pa[i]->value.numel(); ++k) {
      worst = std::max(worst, std::abs(pa[i]->value[k] - pb[i]->value[k]));
    }
  }
  CHECK(worst < 1e-12);
  for (const auto& [name, bn] : a.batch_norm) {
    CHECK(bitwise_equal(bn.running_mean, b.batch_norm.at(name).running_mean));
  }
}

TEST_CASE("dat_step: all-unannotated batch leaves the decoder unchanged") {
  const auto utts = toy_utterances(3, 4, 5);
  Rng init(6);
  auto p = build_model<double>(tiny_model(), init);
  const auto before = p;
  auto opt = sgd(0.1);
  Rng rng(7);
  const auto losses = dat_step(p, opt, make_batch(utts, {4, 5, 8, 9}), 0.5, {}, rng);
  CHECK(losses.annotated == 0);
  CHECK(losses.has_disc);
  CHECK(same_values(p.decoder, before.decoder));
  CHECK_FALSE(same_values(p.encoder, before.encoder));
  CHECK_FALSE(same_values(p.discriminator, before.discriminator));
}

TEST_CASE("dat_step: no annotated samples and lambda = 0 is a no-op") {
  const auto utts = toy_utterances(3, 4, 8);
  Rng init(9);
  auto p = build_model<double>(tiny_model(), init);
  const auto before = p;
  auto opt = sgd(0.1);
  Rng rng(10);
  dat_step(p, opt, make_batch(utts, {4, 8}), 0.0, {}, rng);
  CHECK(same_values(p.encoder, before.encoder));
  CHECK(same_values(p.decoder, before.decoder));
  CHECK(same_values(p.discriminator, before.discriminator));
  for (const auto& [name, bn] : p.batch_norm) {
    CHECK(bn.batches_tracked == before.batch_norm.at(name).batches_tracked);
  }
}

TEST_CASE("dat_gradients: inactive groups are absent; losses are batch means") {
  const auto utts = toy_utterances(3, 4, 11);
  Rng init(12);
  auto p = build_model<double>(tiny_model(), init);
  Rng rng(13);
  DatLosses l;
  const auto g = dat_gradients(p, make_batch(utts, {4, 8}), 0.0, {}, rng, &l);
  CHECK(g.empty());
  const auto g2 = dat_gradients(p, make_batch(utts, {0, 4}), 0.0, {}, rng, &l);
  for (const auto& q : p.discriminator) CHECK(g2.count(q.name) == 0);
  for (const auto& q : p.decoder) CHECK(g2.count(q.name) == 1);
  const auto g3 = dat_gradients(p, make_batch(utts, {0, 4}), 0.0, {true}, rng, &l);
  for (const auto& q : p.discriminator) CHECK(g3.count(q.name) == 1);
  CHECK(l.objective == doctest::Approx(l.loss_ctc * 1 / 2.0));
}

TEST_CASE("pretrain_discriminator: frozen encoder and decoder; one accent stops at once") {
  const auto train = toy_utterances(3, 12, 14);
  const auto val = toy_utterances(3, 4, 15);
  Rng init(16);
  auto p = build_model<double>(tiny_model(), init);
  // Running statistics must exist for the eval-mode encoder.
  for (auto& [name, bn] : p.batch_norm) bn.batches_tracked = 1;
  const auto before = p;
  Rng rng(17);
  DiscPretrainConfig cfg;
  cfg.max_epochs = 4;
  const auto r = pretrain_discriminator(p, OptimizerConfig{}, train, val, cfg, 8, rng);
  CHECK(r.epochs >= 1);
  CHECK(r.epochs <= 4);
  CHECK(r.accuracy.size() == static_cast<std::size_t>(r.epochs));
  CHECK(same_values(p.encoder, before.encoder));
  CHECK(same_values(p.decoder, before.decoder));
  CHECK_FALSE(same_values(p.discriminator, before.discriminator));
  for (const auto& q : p.encoder) CHECK(q.trainable);

  const auto one = toy_utterances(1, 6, 18);
  Rng init1(19);
  auto p1 = build_model<double>(tiny_model(1), init1);
  for (auto& [name, bn] : p1.batch_norm) bn.batches_tracked = 1;
  const auto r1 = pretrain_discriminator(p1, OptimizerConfig{}, one, one, cfg, 4, rng);
  CHECK(r1.epochs == 0);
  CHECK(r1.final_accuracy == 1.0);
}

TEST_CASE("evaluate_model: an all-blank decoder scores 100% on every accent") {
  const auto utts = toy_utterances(2, 3, 20);
  Rng init(21);
  auto p = build_model<double>(tiny_model(2), init);
  for (auto& [name, bn] : p.batch_norm) bn.batches_tracked = 1;
  auto& bias = p.decoder.at("decoder.C4.bias").value;
  for (std::size_t i = 0; i + 1 < bias.numel(); ++i) bias[i] = -1e6;
  EvalOptions opts;
  opts.workers = 2;
  const auto r = evaluate_model(p, utts, Alphabet(8), opts);
  for (const auto& a : r.accents) CHECK(a.wer == 1.0);
  CHECK(r.averages.at("unseen") == 1.0);
  CHECK_THROWS_AS(evaluate_model(p, {without_text(utts[0])}, Alphabet(8), opts), DataError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_WITH_AS(validate_train_config(c), doctest::Contains("train.batch_size"), ConfigError);
  TrainConfig d;
  d.disc_pretrain.lr = -1.0;
  CHECK_THROWS_AS(validate_train_config(d), ConfigError);
}

TEST_CASE("run_regime: grid, lineage, determinism and resume") {
  const auto cfg = parse_experiment_config(testing::small_config());
  testing::TempDir dir;
  generate_experiment_data(cfg, dir / "data");
  const auto data = load_experiment_data(cfg, dir / "data");
  RunOptions opts;
  opts.config_digest = config_digest(cfg);
  opts.accent_names = cfg.corpus.accent_names;
  auto run = [&](Regime r, const std::string& out, std::optional<fs::path> init,
                 std::optional<fs::path> resume = std::nullopt,
                 std::optional<std::uint64_t> stop = std::nullopt) {
    RunOptions o = opts;
    o.out_dir = dir / out;
    o.init = std::move(init);
    o.resume = std::move(resume);
    o.stop_after_step = stop;
    return run_regime<float>(r, cfg.model, cfg.train, regime_data(data, r), o);
  };

  CHECK_THROWS_AS(run(Regime::kDat, "noinit", std::nullopt), ConfigError);
  const auto base = run(Regime::kPretrainBase, "base", std::nullopt);
  REQUIRE(fs::exists(base.final_checkpoint / "params.bin"));
  CHECK(fs::exists(dir / "base" / "metrics.jsonl"));

  const auto retune = run(Regime::kCtcRetune, "retune", base.final_checkpoint);
  const auto retune_ck = load_checkpoint<float>(retune.final_checkpoint);
  CHECK_FALSE(retune_ck.params.has_discriminator());
  CHECK(retune_ck.lineage == std::vector<std::string>{"pretrain_base", "ctc_retune"});
  CHECK_THROWS_AS(run(Regime::kCtcRetune, "bad", retune.final_checkpoint), ConfigError);

  const auto dat = run(Regime::kDat, "dat", base.final_checkpoint);
  const auto accpt = run(Regime::kAccptDat, "accpt", base.final_checkpoint);
  REQUIRE(accpt.disc_pretrain.has_value());
  // Step 0 records the pretrained discriminator; DAT starts from a fresh one.
  // The accuracy gain itself needs a realistic corpus and is an acceptance check.
  CHECK(accpt.metrics[0]["disc_acc"].get<double>() == accpt.disc_pretrain->final_accuracy);
  CHECK_FALSE(dat.disc_pretrain.has_value());
  CHECK(dat.metrics[0]["disc_acc"].is_number());
  CHECK(load_checkpoint<float>(accpt.final_checkpoint).params.has_discriminator());
  const auto on_retune = run(Regime::kAccptDat, "accpt_retune", retune.final_checkpoint);
  CHECK(load_checkpoint<float>(on_retune.final_checkpoint).lineage.size() == 3);

  // Determinism: a second identical run writes identical bytes.
  const auto again = run(Regime::kAccptDat, "accpt2", base.final_checkpoint);
  for (const char* f : {"params.bin", "meta.json", "index.json"}) {
    CHECK(testing::slurp(accpt.final_checkpoint / f) == testing::slurp(again.final_checkpoint / f));
  }
  CHECK(testing::slurp(dir / "accpt" / "metrics.jsonl") == testing::slurp(dir / "accpt2" / "metrics.jsonl"));

  // Resume half-way through reproduces the uninterrupted run.
  const auto steps = load_checkpoint<float>(accpt.final_checkpoint).progress.step;
  REQUIRE(steps >= 2);
  const auto partial = run(Regime::kAccptDat, "part", base.final_checkpoint, std::nullopt, steps / 2);
  CHECK(partial.final_checkpoint.empty());
  char name[32];
  std::snprintf(name, sizeof(name), "step-%08llu", static_cast<unsigned long long>(steps / 2));
  const auto resumed = run(Regime::kAccptDat, "resumed", std::nullopt, dir / "part" / name);
  for (const char* f : {"params.bin", "meta.json", "index.json"}) {
    CHECK(testing::slurp(accpt.final_checkpoint / f) == testing::slurp(resumed.final_checkpoint / f));
  }
  CHECK_THROWS_AS(run(Regime::kDat, "wrong", std::nullopt, dir / "part" / name), ConfigError);
}
