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

#include "accdat/train.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "accdat/checkpoint.h"
#include "accdat/ctc.h"
#include "accdat/error.h"

namespace accdat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_decoder_param(const std::string& name) { return name.rfind("decoder.", 0) == 0; }
bool is_disc_param(const std::string& name) { return name.rfind("disc.", 0) == 0; }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

template <typename S>
std::size_t argmax(const Tensor<S>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

template <typename S>
Tensor<S> pooled_features(ModelParams<S>& params, const Utterance& u) {
  Tape<S> tape;
  Var x = tape.constant(u.features.template cast<S>());
  return tape.value(mean_over_time(tape, encoder_forward(tape, params, x, Mode::kEval)));
}

template <typename S>
std::vector<Tensor<S>> pool_all(ModelParams<S>& params, const std::vector<Utterance>& utts) {
  std::vector<Tensor<S>> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(pooled_features(params, u));
  return out;
}

template <typename S>
double head_accuracy(const ModelParams<S>& params, const std::vector<Tensor<S>>& pooled,
                     const std::vector<Utterance>& utts) {
  if (utts.empty()) return std::numeric_limits<double>::quiet_NaN();
  Rng unused(0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Tape<S> tape;
    Var lp = discriminator_head(tape, params, tape.constant(pooled[i]), Mode::kEval, unused);
    if (static_cast<int>(argmax(tape.value(lp))) == utts[i].accent_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(utts.size());
}

template <typename S>
std::vector<Parameter<S>*> refs(ParameterSet<S>& set) {
  std::vector<Parameter<S>*> out;
  for (auto& p : set) out.push_back(&p);
  return out;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename S>
bool batch_norm_ready(const ModelParams<S>& params) {
  for (const auto& [name, st] : params.batch_norm) {
    if (!st.initialized()) return false;
  }
  return true;
}

std::string step_dir_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step-%08llu", static_cast<unsigned long long>(step));
  return buf;
}

void write_metrics(const fs::path& path, const json& metrics) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& rec : metrics) os << rec.dump() << "\n";
}

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::kPretrainBase: return "pretrain_base";
    case Regime::kCtcRetune: return "ctc_retune";
    case Regime::kDat: return "dat";
    case Regime::kAccptDat: return "accpt_dat";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : {Regime::kPretrainBase, Regime::kCtcRetune, Regime::kDat, Regime::kAccptDat}) {
    if (regime_name(r) == name) return r;
  }
  throw ConfigError("unknown regime '" + name +
                    "' (expected pretrain_base, ctc_retune, dat or accpt_dat)");
}

bool regime_uses_discriminator(Regime r) { return r == Regime::kDat || r == Regime::kAccptDat; }
bool regime_requires_init(Regime r) { return r != Regime::kPretrainBase; }

std::string precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + name + "' (expected f32 or f64)");
}

Precision resolve_precision(Precision configured) {
  const char* env = std::getenv("ACCDAT_PRECISION");
  if (env == nullptr || *env == '\0') return configured;
  try {
    return parse_precision(env);
  } catch (const ConfigError&) {
    throw ConfigError(std::string("ACCDAT_PRECISION: must be f32 or f64, got '") + env + "'");
  }
}

void validate_train_config(const TrainConfig& c, const std::string& path) {
  if (c.pretrain_epochs < 0) throw ConfigError(path + ".pretrain_epochs: must be >= 0");
  if (c.epochs < 0) throw ConfigError(path + ".epochs: must be >= 0");
  if (c.batch_size < 1) throw ConfigError(path + ".batch_size: must be >= 1");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw ConfigError(path + ".rho: must be in [0, 1]");
  if (c.batch_size < 2 && c.rho > 0.0 && c.rho < 1.0) {
    throw ConfigError(path + ".batch_size: must be >= 2 when 0 < rho < 1");
  }
  validate_optimizer_config(c.optimizer, path + ".optimizer");
  validate_lambda_schedule(c.lambda_schedule, path + ".lambda_schedule");
  if (c.disc_pretrain.patience < 1) throw ConfigError(path + ".disc_pretrain.patience: must be >= 1");
  if (!(c.disc_pretrain.min_delta >= 0)) {
    throw ConfigError(path + ".disc_pretrain.min_delta: must be >= 0");
  }
  if (c.disc_pretrain.max_epochs < 1) {
    throw ConfigError(path + ".disc_pretrain.max_epochs: must be >= 1");
  }
  if (c.disc_pretrain.lr && !(*c.disc_pretrain.lr > 0 && std::isfinite(*c.disc_pretrain.lr))) {
    throw ConfigError(path + ".disc_pretrain.lr: must be > 0");
  }
}

InputMask dat_statistics_mask(const Batch& batch) {
  InputMask mask(batch.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mask[i] = batch[i].annotated ? 1 : 0;
    any = any || batch[i].annotated;
  }
  if (!any) mask.assign(batch.size(), 1);
  return mask;
}

template <typename S>
GradientMap<S> dat_gradients(ModelParams<S>& params, const Batch& batch, double lambda,
                             const DatOptions& options, Rng& rng, DatLosses* losses) {
  if (batch.empty()) throw InvalidArgument("dat_gradients: empty batch");
  if (!(lambda >= 0) || !std::isfinite(lambda)) {
    throw InvalidArgument("dat_gradients: lambda must be finite and >= 0");
  }
  const std::size_t n = batch.size();
  const bool use_disc = params.has_discriminator();
  for (const auto& item : batch) {
    if (item.utterance == nullptr) throw InvalidArgument("dat_gradients: null utterance");
    if (item.annotated && !item.utterance->labels) {
      throw InvalidArgument("dat_gradients: annotated item '" + item.utterance->id +
                            "' has no transcription");
    }
    if (item.utterance->accent_id < 0 || item.utterance->accent_id >= params.config.n_accents) {
      throw InvalidArgument("dat_gradients: accent id out of range in '" + item.utterance->id + "'");
    }
  }

  // Unannotated samples must not steer the transcription path on their own,
  // so normalization statistics come from the annotated part of the batch.
  const InputMask statistics = dat_statistics_mask(batch);
  const auto bn_before = params.batch_norm;

  Tape<S> tape;
  std::vector<Var> inputs;
  inputs.reserve(n);
  for (const auto& item : batch) {
    inputs.push_back(tape.constant(item.utterance->features.template cast<S>()));
  }
  const std::vector<Var> feats = encoder_forward(tape, params, std::span<const Var>(inputs),
                                                 Mode::kTrain, statistics);
  std::vector<Var> terms;
  std::vector<S> weights;
  const S inv_n = S(1) / static_cast<S>(n);
  DatLosses out;
  out.total = n;
  out.has_disc = use_disc;
  double sum_ctc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch[i].annotated) continue;
    Var lp = decoder_forward(tape, params, feats[i]);
    Var l = ctc_loss(tape, lp, *batch[i].utterance->labels);
    sum_ctc += static_cast<double>(tape.value(l).item());
    terms.push_back(l);
    weights.push_back(inv_n);
    ++out.annotated;
  }
  double sum_disc = 0;
  if (use_disc) {
    for (std::size_t i = 0; i < n; ++i) {
      Var lp = discriminator_forward(tape, params, feats[i], std::optional<S>(static_cast<S>(lambda)),
                                     Mode::kTrain, rng);
      Var logp = pick(tape, lp, static_cast<std::size_t>(batch[i].utterance->accent_id));
      sum_disc -= static_cast<double>(tape.value(logp).item());
      terms.push_back(logp);
      weights.push_back(-inv_n);
    }
  }
  out.loss_ctc = out.annotated > 0 ? sum_ctc / static_cast<double>(out.annotated) : 0.0;
  out.loss_disc = use_disc ? sum_disc / static_cast<double>(n) : 0.0;
  out.objective = (sum_ctc - lambda * sum_disc) / static_cast<double>(n);
  if (losses != nullptr) *losses = out;

  if (out.annotated == 0 && (lambda == 0.0 || !use_disc)) {
    spdlog::warn("dat step: batch has no annotated sample and lambda = 0; no update");
    params.batch_norm = bn_before;
    return {};
  }
  Var loss = weighted_sum(tape, std::span<const Var>(terms), std::span<const S>(weights));
  GradientMap<S> grads = backward(tape, loss);
  for (auto it = grads.begin(); it != grads.end();) {
    if (is_decoder_param(it->first) && out.annotated == 0) {
      it = grads.erase(it);
    } else if (is_disc_param(it->first) && !options.discriminator_unscaled) {
      if (lambda == 0.0) {
        it = grads.erase(it);
      } else {
        for (auto& g : it->second.data()) g = static_cast<S>(g * static_cast<S>(lambda));
        ++it;
      }
    } else {
      ++it;
    }
  }
  return grads;
}

template <typename S>
DatLosses dat_step(ModelParams<S>& params, OptimizerState<S>& optimizer, const Batch& batch,
                   double lambda, const DatOptions& options, Rng& rng) {
  DatLosses losses;
  GradientMap<S> grads = dat_gradients(params, batch, lambda, options, rng, &losses);
  optimizer_step(optimizer, params.all(), grads);
  return losses;
}

template <typename S>
double discriminator_accuracy(ModelParams<S>& params, const std::vector<Utterance>& utterances) {
  return head_accuracy(params, pool_all(params, utterances), utterances);
}

template <typename S>
DiscPretrainResult pretrain_discriminator(ModelParams<S>& params, const OptimizerConfig& optimizer,
                                          const std::vector<Utterance>& train,
                                          const std::vector<Utterance>& validation,
                                          const DiscPretrainConfig& config,
                                          std::size_t batch_size, Rng& rng) {
  DiscPretrainResult result;
  if (params.config.n_accents == 1) {
    result.accuracy = {1.0};
    result.final_accuracy = 1.0;
    return result;
  }
  if (!params.has_discriminator()) throw StateError("pretrain_discriminator: no discriminator");
  if (train.empty()) throw InvalidArgument("pretrain_discriminator: empty training set");
  if (batch_size < 1) throw InvalidArgument("pretrain_discriminator: batch_size must be >= 1");

  const ParameterSet<S> encoder_before = params.encoder;
  const ParameterSet<S> decoder_before = params.decoder;
  const auto bn_before = params.batch_norm;
  std::vector<bool> flags;
  for (auto* set : {&params.encoder, &params.decoder}) {
    for (auto& p : *set) {
      flags.push_back(p.trainable);
      p.trainable = false;
    }
  }

  const auto train_pooled = pool_all(params, train);
  const auto val_pooled = pool_all(params, validation);
  OptimizerState<S> state;
  state.config = optimizer;
  const auto disc = refs(params.discriminator);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best = -1;
  int stalled = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const S w = S(-1) / static_cast<S>(end - start);
      Tape<S> tape;
      std::vector<Var> terms;
      std::vector<S> weights;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        Var lp = discriminator_head(tape, params, tape.constant(train_pooled[i]), Mode::kTrain, rng);
        terms.push_back(pick(tape, lp, static_cast<std::size_t>(train[i].accent_id)));
        weights.push_back(w);
      }
      Var loss = weighted_sum(tape, std::span<const Var>(terms), std::span<const S>(weights));
      optimizer_step(state, disc, backward(tape, loss));
    }
    const double acc = validation.empty() ? head_accuracy(params, train_pooled, train)
                                          : head_accuracy(params, val_pooled, validation);
    result.accuracy.push_back(acc);
    result.epochs = epoch + 1;
    spdlog::info("disc pretrain epoch {}: validation accent accuracy {:.4f}", epoch + 1, acc);
    if (acc >= best + config.min_delta) {
      best = acc;
      stalled = 0;
    } else if (++stalled >= config.patience) {
      break;
    }
  }
  result.final_accuracy = result.accuracy.empty() ? 0.0 : result.accuracy.back();

  std::size_t k = 0;
  for (auto* set : {&params.encoder, &params.decoder}) {
    for (auto& p : *set) p.trainable = flags[k++];
  }
  auto same = [](const ParameterSet<S>& a, const ParameterSet<S>& b) {
    if (a.size() != b.size()) return false;
    auto ib = b.begin();
    for (const auto& p : a) {
      if (p.name != ib->name || !bitwise_equal(p.value, ib->value)) return false;
      ++ib;
    }
    return true;
  };
  bool bn_same = bn_before.size() == params.batch_norm.size();
  for (const auto& [name, st] : bn_before) {
    auto it = params.batch_norm.find(name);
    bn_same = bn_same && it != params.batch_norm.end() &&
              bitwise_equal(st.running_mean, it->second.running_mean) &&
              bitwise_equal(st.running_var, it->second.running_var) &&
              st.batches_tracked == it->second.batches_tracked;
  }
  if (!same(encoder_before, params.encoder) || !same(decoder_before, params.decoder) || !bn_same) {
    throw InvariantError("pretrain_discriminator: frozen encoder or decoder parameters changed");
  }
  return result;
}

template <typename S>
EvalReport evaluate_model(ModelParams<S>& params, const std::vector<Utterance>& utterances,
                          const Alphabet& alphabet, const EvalOptions& options) {
  if (alphabet.size() != params.config.num_labels()) {
    throw InvalidArgument("evaluate_model: alphabet has " + std::to_string(alphabet.size()) +
                          " labels but the model emits " +
                          std::to_string(params.config.num_labels()));
  }
  for (const auto& u : utterances) {
    if (!u.text) throw DataError("evaluate_model: utterance '" + u.id + "' has no ground truth");
  }
  std::vector<ScoredUtterance> scored(utterances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < utterances.size(); i = next++) {
      try {
        const Utterance& u = utterances[i];
        Tape<S> tape;
        Var x = tape.constant(u.features.template cast<S>());
        Var lp = decoder_forward(tape, params, encoder_forward(tape, params, x, Mode::kEval));
        scored[i] = ScoredUtterance{*u.text, alphabet.decode(greedy_decode(tape.value(lp))),
                                    u.accent_id};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned workers = options.workers != 0 ? options.workers
                                          : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(1, utterances.size())));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<int> ids;
  for (const auto& s : scored) ids.push_back(s.accent_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto subsets = options.subsets.empty() ? default_subsets(ids) : options.subsets;
  std::map<int, std::string> names;
  for (std::size_t a = 0; a < options.accent_names.size(); ++a) {
    names[static_cast<int>(a)] = options.accent_names[a];
  }
  EvalReport report = wer_aggregate(std::span<const ScoredUtterance>(scored),
                                    std::span<const AccentSubset>(subsets), options.weighting,
                                    names);
  report.label = options.label;
  return report;
}

template <typename S>
RunResult run_regime(Regime regime, const ModelConfig& model, const TrainConfig& config,
                     const RegimeData& data, const RunOptions& options) {
  validate_train_config(config);
  validate_model_config(model);
  const bool use_disc = regime_uses_discriminator(regime);
  const int epochs = regime == Regime::kPretrainBase ? config.pretrain_epochs : config.epochs;
  const std::string dtype = sizeof(S) == 4 ? "f32" : "f64";
  const Alphabet alphabet(model.num_labels());

  Checkpoint<S> ck;
  Rng rng;
  if (options.resume) {
    if (checkpoint_dtype(*options.resume) != dtype) {
      throw ConfigError("resume: checkpoint precision differs from the run precision " + dtype);
    }
    ck = load_checkpoint<S>(*options.resume);
    if (ck.regime != regime_name(regime)) {
      throw ConfigError("resume: checkpoint belongs to regime '" + ck.regime + "', not '" +
                        regime_name(regime) + "'");
    }
    if (ck.config_digest != options.config_digest) {
      throw ConfigError("resume: checkpoint was written under a different config (digest " +
                        ck.config_digest + ")");
    }
    rng = deserialize_rng(ck.rng_state);
  } else {
    rng = Rng(derive_seed({config.seed, static_cast<std::uint64_t>(regime) + 1}));
    if (regime_requires_init(regime)) {
      if (!options.init) {
        throw ConfigError("regime " + regime_name(regime) +
                          " needs an init checkpoint from pretrain_base");
      }
      Checkpoint<S> init = load_checkpoint<S>(*options.init);
      // Transfer always starts from base-task weights; the adversarial regimes
      // may also start from a ctc_retune model, which itself started there.
      const bool from_base = init.regime == regime_name(Regime::kPretrainBase);
      const bool from_retune = use_disc && init.regime == regime_name(Regime::kCtcRetune) &&
                               !init.lineage.empty() &&
                               init.lineage.front() == regime_name(Regime::kPretrainBase);
      if (!from_base && !from_retune) {
        throw ConfigError("init checkpoint comes from regime '" + init.regime + "'; expected " +
                          (use_disc ? "pretrain_base or ctc_retune" : "pretrain_base"));
      }
      if (model_config_to_json(init.params.config) != model_config_to_json(model)) {
        throw ConfigError("init checkpoint model config differs from the configured model");
      }
      ck.params.config = model;
      ck.params.encoder = std::move(init.params.encoder);
      ck.params.decoder = std::move(init.params.decoder);
      ck.params.batch_norm = std::move(init.params.batch_norm);
      ck.lineage = init.lineage;
      if (use_disc) init_discriminator(ck.params, rng);
      ck.progress.phase = regime == Regime::kAccptDat ? "disc_pretrain" : "train";
    } else {
      ck.params = build_model<S>(model, rng, false);
    }
    ck.lineage.push_back(regime_name(regime));
    ck.regime = regime_name(regime);
    ck.config_digest = options.config_digest;
    ck.optimizer.config = config.optimizer;
  }

  std::vector<Utterance> annotated;
  std::vector<Utterance> unannotated;
  for (const auto& u : data.train) {
    if (u.accent_id == 0) {
      if (!u.labels) throw DataError("training utterance '" + u.id + "' (accent 0) has no text");
      annotated.push_back(u);
    } else if (use_disc) {
      unannotated.push_back(without_text(u));
    }
  }
  const double rho = use_disc ? config.rho : 1.0;
  const DatOptions dat_options{config.discriminator_unscaled};

  EvalOptions eval_options;
  eval_options.accent_names = options.accent_names;
  auto epoch_record = [&](std::uint64_t epoch, double lambda, json loss_ctc, json loss_disc) {
    json rec{{"epoch", epoch},
             {"regime", regime_name(regime)},
             {"step", ck.progress.step},
             {"lambda", lambda},
             {"loss_ctc", loss_ctc},
             {"loss_disc", loss_disc},
             {"disc_acc", nullptr},
             {"val_wer_seen", nullptr},
             {"val_wer_unseen", nullptr}};
    if (batch_norm_ready(ck.params) && !data.validation.empty()) {
      if (ck.params.has_discriminator()) {
        rec["disc_acc"] = nullable(discriminator_accuracy(ck.params, data.validation));
      }
      const EvalReport r = evaluate_model(ck.params, data.validation, alphabet, eval_options);
      if (const auto* seen = r.find(0)) rec["val_wer_seen"] = seen->wer;
      auto it = r.averages.find("unseen");
      if (it != r.averages.end()) rec["val_wer_unseen"] = nullable(it->second);
    }
    return rec;
  };

  fs::create_directories(options.out_dir);
  RunResult result;
  auto save = [&](const std::string& name) {
    ck.rng_state = serialize_rng(rng);
    save_checkpoint(options.out_dir / name, ck);
    return options.out_dir / name;
  };

  if (ck.progress.phase == "disc_pretrain") {
    OptimizerConfig disc_optimizer = config.optimizer;
    if (config.disc_pretrain.lr) disc_optimizer.lr = *config.disc_pretrain.lr;
    result.disc_pretrain = pretrain_discriminator(ck.params, disc_optimizer, data.train,
                                                  data.validation, config.disc_pretrain,
                                                  config.batch_size, rng);
    json trace{{"epochs", result.disc_pretrain->epochs},
               {"accuracy", result.disc_pretrain->accuracy},
               {"final_accuracy", result.disc_pretrain->final_accuracy}};
    std::ofstream(options.out_dir / "disc_pretrain.json", std::ios::trunc) << trace.dump(1) << "\n";
    ck.progress.phase = "train";
  }
  if (ck.metrics.empty()) {
    ck.metrics.push_back(epoch_record(0, 0.0, nullptr, nullptr));
    write_metrics(options.out_dir / "metrics.jsonl", ck.metrics);
  }

  const auto probe = make_batches(annotated, unannotated, config.batch_size, rho, 0);
  const std::uint64_t per_epoch = probe.size();
  const std::uint64_t total_steps = per_epoch * static_cast<std::uint64_t>(epochs);
  auto acc = [&](const char* key) { return ck.accumulators.value(key, 0.0); };
  double lambda = ck.accumulators.value("lambda", 0.0);

  for (std::uint64_t epoch = ck.progress.epoch; epoch < static_cast<std::uint64_t>(epochs); ++epoch) {
    const auto batches =
        make_batches(annotated, unannotated, config.batch_size, rho, derive_seed({config.seed, epoch}));
    for (std::uint64_t b = ck.progress.step_in_epoch; b < batches.size(); ++b) {
      const double progress = total_steps == 0
                                  ? 0.0
                                  : static_cast<double>(ck.progress.step) / static_cast<double>(total_steps);
      lambda = use_disc ? lambda_schedule(progress, config.lambda_schedule) : 0.0;
      const DatLosses l = dat_step(ck.params, ck.optimizer, batches[b], lambda, dat_options, rng);
      ck.accumulators = json{{"sum_ctc", acc("sum_ctc") + l.loss_ctc * static_cast<double>(l.annotated)},
                             {"n_ctc", acc("n_ctc") + static_cast<double>(l.annotated)},
                             {"sum_disc", acc("sum_disc") + l.loss_disc * static_cast<double>(l.total)},
                             {"n_disc", acc("n_disc") + (l.has_disc ? static_cast<double>(l.total) : 0.0)},
                             {"lambda", lambda}};
      ++ck.progress.step;
      ck.progress.step_in_epoch = b + 1;
      const bool periodic = config.checkpoint_every > 0 && ck.progress.step % config.checkpoint_every == 0;
      const bool stop = options.stop_after_step && ck.progress.step >= *options.stop_after_step;
      if (periodic || stop) save(step_dir_name(ck.progress.step));
      if (stop) {
        result.metrics = ck.metrics;
        return result;
      }
    }
    const double n_ctc = acc("n_ctc");
    const double n_disc = acc("n_disc");
    ck.progress.epoch = epoch + 1;
    ck.progress.step_in_epoch = 0;
    json rec = epoch_record(epoch + 1, lambda, n_ctc > 0 ? json(acc("sum_ctc") / n_ctc) : json(nullptr),
                            n_disc > 0 ? json(acc("sum_disc") / n_disc) : json(nullptr));
    ck.accumulators = json::object();
    spdlog::info("{} epoch {}/{}: {}", regime_name(regime), epoch + 1, epochs, rec.dump());
    ck.metrics.push_back(std::move(rec));
    write_metrics(options.out_dir / "metrics.jsonl", ck.metrics);
  }
  result.final_checkpoint = save("final");
  result.metrics = ck.metrics;
  return result;
}

#define ACCDAT_INSTANTIATE_TRAIN(S)                                                             \
  template GradientMap<S> dat_gradients<S>(ModelParams<S>&, const Batch&, double,               \
                                           const DatOptions&, Rng&, DatLosses*);                \
  template DatLosses dat_step<S>(ModelParams<S>&, OptimizerState<S>&, const Batch&, double,     \
                                 const DatOptions&, Rng&);                                      \
  template DiscPretrainResult pretrain_discriminator<S>(                                        \
      ModelParams<S>&, const OptimizerConfig&, const std::vector<Utterance>&,                   \
      const std::vector<Utterance>&, const DiscPretrainConfig&, std::size_t, Rng&);             \
  template double discriminator_accuracy<S>(ModelParams<S>&, const std::vector<Utterance>&);    \
  template EvalReport evaluate_model<S>(ModelParams<S>&, const std::vector<Utterance>&,         \
                                        const Alphabet&, const EvalOptions&);                   \
  template RunResult run_regime<S>(Regime, const ModelConfig&, const TrainConfig&,              \
                                   const RegimeData&, const RunOptions&);

ACCDAT_INSTANTIATE_TRAIN(float)
ACCDAT_INSTANTIATE_TRAIN(double)

}  // namespace accdat
