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

#include "accdat/verify.h"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "accdat/ctc.h"
#include "accdat/error.h"
#include "accdat/gradcheck.h"
#include "accdat/model.h"
#include "accdat/optim.h"
#include "accdat/train.h"

namespace accdat {
namespace {

using Clock = std::chrono::steady_clock;
using T64 = Tensor<double>;

double normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

T64 random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  T64 t(shape);
  for (auto& v : t.data()) v = scale * normal(rng);
  return t;
}

// sum(w * y) as a scalar node; reduces any output to a loss.
Var project(Tape<double>& tape, Var y, const T64& w) {
  const T64& v = tape.value(y);
  double s = 0;
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i] * w[i];
  return tape.record(T64::scalar(s), {y}, [y, w](Tape<double>& t, const T64& g) {
    T64& gb = t.grad_buffer(y);
    for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += g[0] * w[i];
  });
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

template <typename F>
SuiteResult timed(const std::string& name, F&& body) {
  SuiteResult r;
  r.name = name;
  const auto start = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

// --- small adversarial model ------------------------------------------------

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_channels = 4;
  c.encoder_blocks = {{"C1", BlockKind::kConv, 3, 6, 1, 1, 2, 1},
                      {"B1", BlockKind::kBlock, 3, 7, 2, 1, 1, 1},
                      {"C3", BlockKind::kConv, 1, 8, 1, 1, 1, 1}};
  c.decoder_block = {"C4", BlockKind::kConv, 1, 4, 1, 1, 1, 1};
  c.disc_hidden = {5, 6, 6};
  c.disc_dropout = 0.2;
  c.n_accents = 3;
  return c;
}

enum class BatchKind { kAnnotated, kUnannotated, kMixed };

struct Instance {
  ModelParams<double> params;
  std::vector<Utterance> utts;
  Batch batch;
};

Instance make_instance(std::uint64_t seed, BatchKind kind, std::size_t n = 4) {
  Rng rng(seed);
  Instance inst;
  inst.params = build_model<double>(tiny_config(), rng, true);
  for (auto& p : inst.params.decoder) {
    if (p.value.rank() == 1) p.value = random_tensor(p.value.shape(), rng, 0.1);
  }
  inst.utts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool annotated = kind == BatchKind::kAnnotated ||
                           (kind == BatchKind::kMixed && i % 2 == 0);
    Utterance u;
    u.id = "u" + std::to_string(i);
    const std::size_t frames = 10 + rng() % 6;
    u.features = random_tensor(Shape{4, frames}, rng).cast<float>();
    u.accent_id = annotated ? 0 : 1 + static_cast<int>(rng() % 2);
    LabelSequence labels(1 + rng() % 3);
    for (int& l : labels) l = static_cast<int>(rng() % 3);
    if (annotated) u.labels = labels;
    inst.utts.push_back(std::move(u));
  }
  for (std::size_t i = 0; i < n; ++i) inst.batch.push_back({&inst.utts[i], inst.utts[i].annotated()});
  return inst;
}

std::vector<Var> batch_inputs(Tape<double>& tape, const Batch& batch) {
  std::vector<Var> xs;
  for (const auto& item : batch) xs.push_back(tape.constant(item.utterance->features.cast<double>()));
  return xs;
}

// Mean-over-batch CTC term on annotated samples, weights 1/N.
GradientMap<double> ctc_only_gradients(ModelParams<double> params, const Batch& batch) {
  Tape<double> tape;
  const auto xs = batch_inputs(tape, batch);
  const auto feats = encoder_forward(tape, params, std::span<const Var>(xs), Mode::kTrain,
                                     dat_statistics_mask(batch));
  std::vector<Var> terms;
  std::vector<double> weights;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].annotated) continue;
    terms.push_back(ctc_loss(tape, decoder_forward(tape, params, feats[i]),
                             *batch[i].utterance->labels));
    weights.push_back(1.0 / static_cast<double>(batch.size()));
  }
  if (terms.empty()) return {};
  return backward(tape, weighted_sum(tape, std::span<const Var>(terms),
                                     std::span<const double>(weights)));
}

// Mean cross-entropy of the discriminator over every sample, no reversal.
Var disc_loss(Tape<double>& tape, ModelParams<double>& params, const Batch& batch, Rng& rng) {
  const auto xs = batch_inputs(tape, batch);
  const auto feats = encoder_forward(tape, params, std::span<const Var>(xs), Mode::kTrain,
                                     dat_statistics_mask(batch));
  std::vector<Var> terms;
  std::vector<double> weights;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var lp = discriminator_forward(tape, params, feats[i], std::optional<double>(), Mode::kTrain, rng);
    terms.push_back(pick(tape, lp, static_cast<std::size_t>(batch[i].utterance->accent_id)));
    weights.push_back(-1.0 / static_cast<double>(batch.size()));
  }
  return weighted_sum(tape, std::span<const Var>(terms), std::span<const double>(weights));
}

GradientMap<double> ce_only_gradients(ModelParams<double> params, const Batch& batch,
                                      std::uint64_t dropout_seed) {
  Rng rng(dropout_seed);
  Tape<double> tape;
  return backward(tape, disc_loss(tape, params, batch, rng));
}

const T64* find(const GradientMap<double>& g, const std::string& name) {
  auto it = g.find(name);
  return it == g.end() ? nullptr : &it->second;
}

// --- suites ------------------------------------------------------------------

SuiteResult ctc_suite(const VerifyOptions& o) {
  return timed("ctc_oracle", [&](SuiteResult& r) {
    Rng rng(derive_seed({o.seed, 1}));
    double worst = 0;
    int infeasible = 0;
    bool consistent = true;
    for (int i = 0; i < o.ctc_instances; ++i) {
      const std::size_t frames = 1 + rng() % 6;
      const std::size_t labels = 1 + rng() % 3;
      LabelSequence target(rng() % 4);
      for (int& l : target) l = static_cast<int>(rng() % labels);
      Tape<double> tape;
      Var lp = log_softmax(tape, tape.constant(random_tensor(Shape{frames, labels + 1}, rng, 2.0)));
      const T64& logp = tape.value(lp);
      const double oracle = ctc_brute_force(logp, target);
      if (frames < ctc_min_frames(target)) {
        ++infeasible;
        bool threw = false;
        try {
          ctc_loss_grad(logp, target);
        } catch (const InfeasibleTarget&) {
          threw = true;
        }
        consistent = consistent && threw && std::isinf(oracle);
        continue;
      }
      worst = std::max(worst, std::fabs(ctc_loss_grad(logp, target).loss - oracle));
    }
    r.passed = worst < 1e-9 && consistent;
    r.detail = std::to_string(o.ctc_instances) + " instances (" + std::to_string(infeasible) +
               " infeasible), max |forward-backward - enumeration| = " + fmt(worst);
  });
}

SuiteResult gradient_suite(const VerifyOptions& o) {
  return timed("gradient_check", [&](SuiteResult& r) {
    Rng rng(derive_seed({o.seed, 2}));
    using Fn = std::function<Var(Tape<double>&, Var)>;
    struct Case {
      std::string name;
      Fn f;
      T64 point;
    };
    auto reduce = [](const Shape& out, std::uint64_t s) {
      Rng w(s);
      return random_tensor(out, w);
    };
    const T64 x37 = random_tensor({3, 7}, rng);
    const T64 k33 = random_tensor({3, 3}, rng);
    const T64 w43 = random_tensor({4, 3}, rng);
    const T64 x235 = random_tensor({2, 3, 5}, rng);
    const T64 b3 = random_tensor({3}, rng);
    const T64 x34 = random_tensor({3, 4}, rng);
    const T64 g3 = random_tensor({3}, rng);
    const T64 w54 = random_tensor({5, 4}, rng);
    const T64 v4 = random_tensor({4}, rng);
    const T64 b5 = random_tensor({5}, rng);
    T64 away = random_tensor({4, 5}, rng);
    for (auto& v : away.data()) v += v >= 0 ? 0.2 : -0.2;
    const T64 logits = random_tensor({6, 4}, rng);

    std::vector<Case> cases;
    auto dw = [](Tape<double>& t, Var x, Var k) { return conv1d(t, x, k, ConvMode::kDepthwise, 1, 2); };
    cases.push_back({"conv1d.depthwise.input", [&](Tape<double>& t, Var x) {
                       return project(t, dw(t, x, t.constant(k33)), reduce({3, 7}, 1)); }, x37});
    cases.push_back({"conv1d.depthwise.kernel", [&](Tape<double>& t, Var k) {
                       return project(t, dw(t, t.constant(x37), k), reduce({3, 7}, 1)); }, k33});
    cases.push_back({"conv1d.depthwise.stride2", [&](Tape<double>& t, Var x) {
                       return project(t, conv1d(t, x, t.constant(k33), ConvMode::kDepthwise, 2, 1),
                                      reduce({3, 4}, 2)); }, x37});
    cases.push_back({"conv1d.pointwise.input", [&](Tape<double>& t, Var x) {
                       return project(t, conv1d(t, x, t.constant(w43), ConvMode::kPointwise, 2, 1),
                                      reduce({4, 4}, 3)); }, x37});
    cases.push_back({"conv1d.pointwise.kernel", [&](Tape<double>& t, Var w) {
                       return project(t, conv1d(t, t.constant(x37), w, ConvMode::kPointwise, 1, 1),
                                      reduce({4, 7}, 4)); }, w43});
    cases.push_back({"conv1d.batched", [&](Tape<double>& t, Var x) {
                       return project(t, conv1d(t, x, t.constant(k33), ConvMode::kDepthwise, 1, 1),
                                      reduce({2, 3, 5}, 5)); }, x235});
    cases.push_back({"bias_add", [&](Tape<double>& t, Var b) {
                       return project(t, bias_add(t, t.constant(x37), b), reduce({3, 7}, 6)); }, b3});
    auto bn = [&](Tape<double>& t, Var x, Var gamma, Var beta) {
      BatchNormState<double> state(3);
      const Var in[2] = {x, t.constant(x34)};
      const auto out = batchnorm1d(t, std::span<const Var>(in), gamma, beta, &state, Mode::kTrain);
      return add(t, project(t, out[0], reduce({3, 7}, 7)), project(t, out[1], reduce({3, 4}, 8)));
    };
    cases.push_back({"batchnorm1d.input", [&](Tape<double>& t, Var x) {
                       return bn(t, x, t.constant(g3), t.constant(b3)); }, x37});
    cases.push_back({"batchnorm1d.gamma", [&](Tape<double>& t, Var g) {
                       return bn(t, t.variable(x37), g, t.constant(b3)); }, g3});
    cases.push_back({"batchnorm1d.beta", [&](Tape<double>& t, Var b) {
                       return bn(t, t.variable(x37), t.constant(g3), b); }, b3});
    // Statistics from one input only: gradients reach both inputs directly,
    // and through the statistics only the selected one.
    auto bn_masked = [&](Tape<double>& t, Var x, std::uint8_t select_x) {
      BatchNormState<double> state(3);
      const Var in[2] = {x, t.variable(x34)};
      const InputMask mask{select_x, static_cast<std::uint8_t>(1 - select_x)};
      const auto out = batchnorm1d(t, std::span<const Var>(in), t.constant(g3), t.constant(b3),
                                   &state, Mode::kTrain, {}, mask);
      return add(t, project(t, out[0], reduce({3, 7}, 7)), project(t, out[1], reduce({3, 4}, 8)));
    };
    cases.push_back({"batchnorm1d.masked_selected", [&](Tape<double>& t, Var x) {
                       return bn_masked(t, x, 1); }, x37});
    cases.push_back({"batchnorm1d.masked_excluded", [&](Tape<double>& t, Var x) {
                       return bn_masked(t, x, 0); }, x37});
    cases.push_back({"linear.input", [&](Tape<double>& t, Var x) {
                       return project(t, linear(t, x, t.constant(w54), t.constant(b5)), reduce({5}, 9)); }, v4});
    cases.push_back({"linear.weight", [&](Tape<double>& t, Var w) {
                       return project(t, linear(t, t.constant(v4), w, t.constant(b5)), reduce({5}, 9)); }, w54});
    cases.push_back({"linear.bias", [&](Tape<double>& t, Var b) {
                       return project(t, linear(t, t.constant(v4), t.constant(w54), b), reduce({5}, 9)); }, b5});
    cases.push_back({"relu", [&](Tape<double>& t, Var x) {
                       return project(t, relu(t, x), reduce({4, 5}, 10)); }, away});
    cases.push_back({"add", [&](Tape<double>& t, Var x) {
                       return project(t, add(t, x, t.constant(away)), reduce({4, 5}, 11)); }, away});
    cases.push_back({"scale", [&](Tape<double>& t, Var x) {
                       return project(t, scale(t, x, -1.7), reduce({4, 5}, 12)); }, away});
    cases.push_back({"dropout", [&](Tape<double>& t, Var x) {
                       Rng mask(99);
                       return project(t, dropout(t, x, 0.3, Mode::kTrain, mask), reduce({4, 5}, 13)); }, away});
    cases.push_back({"mean_over_time", [&](Tape<double>& t, Var x) {
                       return project(t, mean_over_time(t, x), reduce({3}, 14)); }, x37});
    cases.push_back({"log_softmax", [&](Tape<double>& t, Var x) {
                       return project(t, log_softmax(t, x), reduce({6, 4}, 15)); }, logits});
    cases.push_back({"transpose", [&](Tape<double>& t, Var x) {
                       return project(t, transpose(t, x), reduce({7, 3}, 16)); }, x37});
    cases.push_back({"sum", [&](Tape<double>& t, Var x) {
                       return sum(t, scale(t, relu(t, x), 0.5)); }, away});
    cases.push_back({"pick", [&](Tape<double>& t, Var x) {
                       return pick(t, log_softmax(t, x), 2); }, v4});
    cases.push_back({"weighted_sum", [&](Tape<double>& t, Var x) {
                       Var ls = log_softmax(t, x);
                       const Var parts[3] = {pick(t, ls, 0), pick(t, ls, 1), pick(t, ls, 3)};
                       const double w[3] = {0.3, -1.1, 2.0};
                       return weighted_sum(t, std::span<const Var>(parts), std::span<const double>(w)); }, v4});
    cases.push_back({"ctc_loss", [&](Tape<double>& t, Var x) {
                       return ctc_loss(t, log_softmax(t, x), LabelSequence{0, 1, 1}); }, logits});
    cases.push_back({"ctc_loss.blank_heavy", [&](Tape<double>& t, Var x) {
                       return ctc_loss(t, log_softmax(t, x), LabelSequence{2}); }, logits});

    double worst_op = 0;
    std::string worst_name;
    for (const auto& c : cases) {
      const GradCheckResult g = check_input_gradient(c.f, c.point);
      if (g.max_rel_error >= worst_op) {
        worst_op = g.max_rel_error;
        worst_name = c.name + " " + g.worst;
      }
    }

    // Composite loss of the whole adversarial model (no reversal, so the tape
    // gradient is the gradient of the evaluated function).
    Instance inst = make_instance(derive_seed({o.seed, 3}), BatchKind::kMixed);
    auto composite = [&](Tape<double>& tape) {
      Rng mask(7);
      const auto xs = batch_inputs(tape, inst.batch);
      const auto feats = encoder_forward(tape, inst.params, std::span<const Var>(xs), Mode::kTrain,
                                         dat_statistics_mask(inst.batch));
      std::vector<Var> terms;
      std::vector<double> weights;
      for (std::size_t i = 0; i < inst.batch.size(); ++i) {
        if (inst.batch[i].annotated) {
          terms.push_back(ctc_loss(tape, decoder_forward(tape, inst.params, feats[i]),
                                   *inst.batch[i].utterance->labels));
          weights.push_back(0.25);
        }
        Var lp = discriminator_forward(tape, inst.params, feats[i], std::optional<double>(), Mode::kTrain, mask);
        terms.push_back(pick(tape, lp, static_cast<std::size_t>(inst.batch[i].utterance->accent_id)));
        weights.push_back(-0.25);
      }
      return weighted_sum(tape, std::span<const Var>(terms), std::span<const double>(weights));
    };
    const GradCheckResult model = check_parameter_gradients(composite, inst.params.all(), 4,
                                                            derive_seed({o.seed, 4}));
    r.passed = worst_op < 1e-6 && model.max_rel_error < 1e-4;
    r.detail = std::to_string(cases.size()) + " op checks, worst rel err " + fmt(worst_op) + " (" +
               worst_name + "); model composite over " + std::to_string(model.coordinates) +
               " coords, worst rel err " + fmt(model.max_rel_error) + " (" + model.worst + ")";
  });
}

SuiteResult grl_suite(const VerifyOptions& o) {
  return timed("grl_algebra", [&](SuiteResult& r) {
    Rng rng(derive_seed({o.seed, 5}));
    bool ok = true;
    for (double lambda : {0.0, 0.5, 2.0}) {
      const T64 x = random_tensor({6}, rng);
      const T64 up = random_tensor({6}, rng);
      Tape<double> tape;
      Var xv = tape.variable(x);
      Var y = grl(tape, xv, lambda);
      ok = ok && bitwise_equal(tape.value(y), x);
      tape.backward(project(tape, y, up));
      const T64 g = tape.grad(xv);
      for (std::size_t i = 0; i < 6; ++i) ok = ok && g[i] == -lambda * up[i];
    }
    Instance inst = make_instance(derive_seed({o.seed, 6}), BatchKind::kUnannotated);
    Tape<double> tape;
    Rng mask(1);
    const auto xs = batch_inputs(tape, inst.batch);
    const auto feats = encoder_forward(tape, inst.params, std::span<const Var>(xs), Mode::kTrain);
    std::vector<Var> terms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      Var lp = discriminator_forward(tape, inst.params, feats[i], std::optional<double>(0.0),
                                     Mode::kTrain, mask);
      terms.push_back(pick(tape, lp, static_cast<std::size_t>(inst.batch[i].utterance->accent_id)));
      weights.push_back(-0.25);
    }
    const auto grads = backward(tape, weighted_sum(tape, std::span<const Var>(terms),
                                                   std::span<const double>(weights)));
    bool zero_flow = true;
    bool disc_nonzero = false;
    for (const auto& [name, g] : grads) {
      double norm = 0;
      for (double v : g.data()) norm += std::fabs(v);
      if (name.rfind("encoder.", 0) == 0) zero_flow = zero_flow && norm == 0.0;
      if (name.rfind("disc.", 0) == 0) disc_nonzero = disc_nonzero || norm > 0;
    }
    r.passed = ok && zero_flow && disc_nonzero;
    r.detail = std::string("forward identity and -lambda backward: ") + (ok ? "exact" : "MISMATCH") +
               "; lambda=0 encoder gradient from discriminator: " + (zero_flow ? "zero" : "NONZERO");
  });
}

SuiteResult dat_suite(const VerifyOptions& o) {
  return timed("dat_update_equivalence", [&](SuiteResult& r) {
    const double mu = 0.1;
    double worst = 0;
    bool masked = true;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < o.dat_instances; ++i) {
      const auto kind = static_cast<BatchKind>(i % 3);
      ++counts[i % 3];
      Rng lr(derive_seed({o.seed, 7, static_cast<std::uint64_t>(i)}));
      const double lambda = i % 4 == 0 ? 0.0 : i % 4 == 1 ? 0.5 : 2.0 * uniform01(lr);
      Instance inst = make_instance(derive_seed({o.seed, 8, static_cast<std::uint64_t>(i)}), kind);
      const std::uint64_t dropout_seed = derive_seed({o.seed, 9, static_cast<std::uint64_t>(i)});

      ModelParams<double> single = inst.params;
      OptimizerState<double> sgd;
      sgd.config.kind = OptimizerKind::kSgd;
      sgd.config.lr = mu;
      Rng rng(dropout_seed);
      dat_step(single, sgd, inst.batch, lambda, DatOptions{}, rng);

      const auto gy = ctc_only_gradients(inst.params, inst.batch);
      const auto gd = ce_only_gradients(inst.params, inst.batch, dropout_seed);
      ModelParams<double> manual = inst.params;
      for (Parameter<double>* p : manual.all()) {
        const T64* y = find(gy, p->name);
        const T64* d = find(gd, p->name);
        auto theta = p->value.data();
        for (std::size_t k = 0; k < theta.size(); ++k) {
          const double y_k = y ? (*y)[k] : 0.0;
          const double d_k = d ? (*d)[k] : 0.0;
          if (p->name.rfind("encoder.", 0) == 0) {
            theta[k] -= mu * (y_k - lambda * d_k);
          } else if (p->name.rfind("decoder.", 0) == 0) {
            theta[k] -= mu * y_k;
          } else {
            theta[k] -= mu * lambda * d_k;
          }
        }
      }
      const auto a = single.all();
      const auto b = manual.all();
      for (std::size_t k = 0; k < a.size(); ++k) {
        for (std::size_t j = 0; j < a[k]->value.numel(); ++j) {
          worst = std::max(worst, std::fabs(a[k]->value[j] - b[k]->value[j]));
        }
      }
      if (kind == BatchKind::kUnannotated) {
        for (const auto& p : single.decoder) {
          masked = masked && bitwise_equal(p.value, inst.params.decoder.at(p.name).value);
        }
      }
    }
    r.passed = worst < 1e-10 && masked;
    r.detail = std::to_string(o.dat_instances) + " instances (" + std::to_string(counts[0]) +
               " annotated, " + std::to_string(counts[1]) + " unannotated, " +
               std::to_string(counts[2]) + " mixed), max |single - two-pass| = " + fmt(worst) +
               (masked ? "" : "; decoder moved on an unannotated batch");
  });
}

SuiteResult lambda_suite() {
  return timed("lambda_schedule", [&](SuiteResult& r) {
    const LambdaSchedule s{1.0, 10.0};
    const double at0 = lambda_schedule(0.0, s);
    const double mid = lambda_schedule(0.5, s);
    const double expected = 2.0 / (1.0 + std::exp(-5.0)) - 1.0;
    bool monotone = true;
    double prev = at0;
    for (int i = 1; i <= 1000; ++i) {
      const double v = lambda_schedule(i / 1000.0, s);
      monotone = monotone && v >= prev && v <= s.lambda_max;
      prev = v;
    }
    r.passed = at0 == 0.0 && std::fabs(mid - 0.98661) < 1e-5 && std::fabs(mid - expected) < 1e-15 &&
               monotone;
    r.detail = "lambda(0)=" + fmt(at0) + ", lambda(0.5)=" + std::to_string(mid) +
               (monotone ? ", monotone on 1000-point grid" : ", NOT monotone");
  });
}

SuiteResult minmax_suite(const VerifyOptions& o) {
  return timed("minmax_direction", [&](SuiteResult& r) {
    const double mu = 1e-3;
    int good = 0;
    int total = 0;
    for (int i = 0; i < o.dat_instances; ++i) {
      const auto kind = i % 2 == 0 ? BatchKind::kMixed : BatchKind::kUnannotated;
      Rng lr(derive_seed({o.seed, 10, static_cast<std::uint64_t>(i)}));
      const double lambda = 0.1 + 1.9 * uniform01(lr);
      Instance inst = make_instance(derive_seed({o.seed, 11, static_cast<std::uint64_t>(i)}), kind);
      const std::uint64_t dropout_seed = derive_seed({o.seed, 12, static_cast<std::uint64_t>(i)});

      ModelParams<double> work = inst.params;
      Rng rng(dropout_seed);
      const auto g = dat_gradients(work, inst.batch, lambda, DatOptions{}, rng, nullptr);
      const auto gy = ctc_only_gradients(inst.params, inst.batch);
      const auto gd = ce_only_gradients(inst.params, inst.batch, dropout_seed);

      // Update directions: theta_d step, and the reversed part of the theta_f step.
      GradientMap<double> step_d;
      GradientMap<double> step_f;
      double dir_d = 0;
      double dir_f = 0;
      for (const auto& [name, gt] : g) {
        const T64* dd = find(gd, name);
        if (dd == nullptr) continue;
        T64 step(gt.shape());
        if (name.rfind("disc.", 0) == 0) {
          for (std::size_t k = 0; k < step.numel(); ++k) step[k] = -mu * gt[k];
          for (std::size_t k = 0; k < step.numel(); ++k) dir_d += (*dd)[k] * step[k];
          step_d.emplace(name, step);
        } else if (name.rfind("encoder.", 0) == 0) {
          const T64* y = find(gy, name);
          for (std::size_t k = 0; k < step.numel(); ++k) step[k] = -mu * (gt[k] - (y ? (*y)[k] : 0.0));
          for (std::size_t k = 0; k < step.numel(); ++k) dir_f += (*dd)[k] * step[k];
          step_f.emplace(name, step);
        }
      }
      // Central-difference confirmation of both directional derivatives.
      auto ld_along = [&](const GradientMap<double>& step, double h) {
        ModelParams<double> moved = inst.params;
        for (Parameter<double>* p : moved.all()) {
          if (const T64* s = find(step, p->name)) {
            for (std::size_t k = 0; k < p->value.numel(); ++k) p->value[k] += h * (*s)[k];
          }
        }
        Rng mask(dropout_seed);
        Tape<double> tape;
        return tape.value(disc_loss(tape, moved, inst.batch, mask)).item();
      };
      const double fd_d = ld_along(step_d, 1e-2) - ld_along(step_d, -1e-2);
      const double fd_f = ld_along(step_f, 1e-2) - ld_along(step_f, -1e-2);
      ++total;
      if (dir_d < 0 && dir_f > 0 && fd_d < 0 && fd_f > 0) ++good;
    }
    r.passed = total >= 50 && good == total;
    r.detail = std::to_string(good) + "/" + std::to_string(total) +
               " instances: discriminator step lowers L_d, reversed encoder step raises it";
  });
}

}  // namespace

std::vector<SuiteResult> run_verification(const VerifyOptions& options) {
  return {ctc_suite(options),       gradient_suite(options), grl_suite(options),
          dat_suite(options),       lambda_suite(),          minmax_suite(options)};
}

}  // namespace accdat
