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

#include "accdat/model.h"

#include <cmath>
#include <set>

#include "accdat/error.h"
#include "json_reader.h"

namespace accdat {
namespace {

std::string kind_name(BlockKind k) { return k == BlockKind::kConv ? "conv" : "block"; }

void check_block(const BlockConfig& b, const std::string& where) {
  if (b.name.empty()) throw ConfigError(where + ".name: must be non-empty");
  if (b.kernel < 1) throw ConfigError(where + ".kernel: must be >= 1");
  if (b.channels < 1) throw ConfigError(where + ".channels: must be >= 1");
  if (b.repeats_within < 1) throw ConfigError(where + ".repeats_within: must be >= 1");
  if (b.block_repeats < 1) throw ConfigError(where + ".block_repeats: must be >= 1");
  if (b.stride < 1) throw ConfigError(where + ".stride: must be >= 1");
  if (b.dilation < 1) throw ConfigError(where + ".dilation: must be >= 1");
  if (b.in_channels < 0) throw ConfigError(where + ".in_channels: must be >= 0");
}

template <typename S>
Tensor<S> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<S>((2.0 * uniform01(rng) - 1.0) * bound);
  return t;
}

// Parameters of one depthwise-separable unit: [depthwise] -> pointwise -> BN.
template <typename S>
void add_separable(ModelParams<S>& p, ParameterSet<S>& set, const std::string& prefix,
                   std::size_t c_in, std::size_t c_out, std::size_t kernel, bool batch_norm,
                   Rng& rng) {
  if (kernel > 1) set.add(prefix + ".depthwise", uniform_init<S>(Shape{c_in, kernel}, kernel, rng));
  set.add(prefix + ".pointwise", uniform_init<S>(Shape{c_out, c_in}, c_in, rng));
  if (batch_norm) {
    set.add(prefix + ".bn.gamma", Tensor<S>(Shape{c_out}, S(1)));
    set.add(prefix + ".bn.beta", Tensor<S>(Shape{c_out}));
    p.batch_norm.emplace(prefix + ".bn", BatchNormState<S>(c_out));
  }
}

// Applies one separable unit to every input and batch-normalizes the group.
template <typename S>
std::vector<Var> separable_forward(Tape<S>& tape, ModelParams<S>& p, const ParameterSet<S>& set,
                                   const std::string& prefix, std::span<const Var> xs,
                                   std::size_t kernel, std::size_t stride, std::size_t dilation,
                                   Mode mode, const InputMask& statistics) {
  std::vector<Var> hs;
  hs.reserve(xs.size());
  for (Var x : xs) {
    Var h = x;
    std::size_t pointwise_stride = stride;
    if (kernel > 1) {
      h = conv1d(tape, h, tape.param(set.at(prefix + ".depthwise")), ConvMode::kDepthwise, stride,
                 dilation);
      pointwise_stride = 1;
    }
    h = conv1d(tape, h, tape.param(set.at(prefix + ".pointwise")), ConvMode::kPointwise,
               pointwise_stride, 1);
    hs.push_back(h);
  }
  BatchNormOptions opts{p.config.bn_eps, p.config.bn_momentum};
  return batchnorm1d(tape, std::span<const Var>(hs), tape.param(set.at(prefix + ".bn.gamma")),
                     tape.param(set.at(prefix + ".bn.beta")), &p.batch_norm.at(prefix + ".bn"),
                     mode, opts, statistics);
}

template <typename S>
std::vector<Var> relu_all(Tape<S>& tape, std::vector<Var> xs) {
  for (Var& x : xs) x = relu(tape, x);
  return xs;
}

template <typename S>
void build_discriminator(ModelParams<S>& p, Rng& rng) {
  p.discriminator = ParameterSet<S>();
  std::size_t in = static_cast<std::size_t>(p.config.feature_channels());
  for (std::size_t i = 0; i < p.config.disc_hidden.size(); ++i) {
    const auto out = static_cast<std::size_t>(p.config.disc_hidden[i]);
    const std::string name = "disc.L" + std::to_string(i);
    p.discriminator.add(name + ".weight", uniform_init<S>(Shape{out, in}, in, rng));
    p.discriminator.add(name + ".bias", Tensor<S>(Shape{out}));
    in = out;
  }
  const auto classes = static_cast<std::size_t>(p.config.n_accents);
  p.discriminator.add("disc.out.weight", uniform_init<S>(Shape{classes, in}, in, rng));
  p.discriminator.add("disc.out.bias", Tensor<S>(Shape{classes}));
}

}  // namespace

std::vector<std::string> validate_model_config(const ModelConfig& c) {
  std::vector<std::string> warnings;
  if (c.input_channels < 1) throw ConfigError("model.input_channels: must be >= 1");
  if (c.encoder_blocks.empty()) throw ConfigError("model.encoder_blocks: must be non-empty");
  std::set<std::string> names;
  int prev = c.input_channels;
  for (std::size_t i = 0; i < c.encoder_blocks.size(); ++i) {
    const auto& b = c.encoder_blocks[i];
    const std::string where = "model.encoder_blocks[" + std::to_string(i) + "]";
    check_block(b, where);
    if (i > 0 && b.stride > 1) {
      throw ConfigError(where + ".stride: only the first encoder block may subsample");
    }
    if (b.kind == BlockKind::kBlock && b.stride > 1) {
      throw ConfigError(where + ".stride: residual blocks must have stride 1");
    }
    if (b.in_channels != 0 && b.in_channels != prev) {
      throw ConfigError(where + ".in_channels: inconsistent channel chaining, block expects " +
                        std::to_string(b.in_channels) + " inputs but the previous stage emits " +
                        std::to_string(prev));
    }
    if (!names.insert(b.name).second) throw ConfigError(where + ".name: duplicate '" + b.name + "'");
    prev = b.channels;
  }
  const auto& d = c.decoder_block;
  check_block(d, "model.decoder_block");
  if (d.kind != BlockKind::kConv) throw ConfigError("model.decoder_block.kind: must be conv");
  if (d.stride != 1) throw ConfigError("model.decoder_block.stride: must be 1");
  if (d.channels < 2) {
    throw ConfigError("model.decoder_block.channels: must be labels + 1 (blank) >= 2");
  }
  if (d.in_channels != 0 && d.in_channels != prev) {
    throw ConfigError("model.decoder_block.in_channels: inconsistent channel chaining");
  }
  if (!names.insert(d.name).second) throw ConfigError("model.decoder_block.name: duplicate");
  if (d.kernel == 1 && d.dilation > 1) {
    warnings.push_back("model.decoder_block: dilation " + std::to_string(d.dilation) +
                       " has no effect on a kernel-size-1 convolution");
  }
  if (c.disc_hidden.empty()) throw ConfigError("model.disc_hidden: must be non-empty");
  for (std::size_t i = 0; i < c.disc_hidden.size(); ++i) {
    if (c.disc_hidden[i] < 1) {
      throw ConfigError("model.disc_hidden[" + std::to_string(i) + "]: must be >= 1");
    }
  }
  if (!(c.disc_dropout >= 0.0 && c.disc_dropout < 1.0)) {
    throw ConfigError("model.disc_dropout: must be in [0, 1)");
  }
  if (c.n_accents < 1) throw ConfigError("model.n_accents: must be >= 1");
  if (!(c.bn_eps > 0)) throw ConfigError("model.bn_eps: must be > 0");
  if (!(c.bn_momentum > 0 && c.bn_momentum <= 1)) throw ConfigError("model.bn_momentum: must be in (0, 1]");
  return warnings;
}

ModelConfig quartznet15x5_config(int input_channels, int num_labels, int n_accents) {
  ModelConfig c;
  c.input_channels = input_channels;
  c.encoder_blocks = {
      {"C1", BlockKind::kConv, 33, 256, 1, 1, 2, 1},
      {"B1", BlockKind::kBlock, 33, 256, 5, 3, 1, 1},
      {"B2", BlockKind::kBlock, 39, 256, 5, 3, 1, 1},
      {"B3", BlockKind::kBlock, 51, 512, 5, 3, 1, 1},
      {"B4", BlockKind::kBlock, 63, 512, 5, 3, 1, 1},
      {"B5", BlockKind::kBlock, 75, 512, 5, 3, 1, 1},
      {"C2", BlockKind::kConv, 87, 512, 1, 1, 1, 1},
      {"C3", BlockKind::kConv, 1, 1024, 1, 1, 1, 1},
  };
  c.decoder_block = {"C4", BlockKind::kConv, 1, num_labels + 1, 1, 1, 1, 2};
  c.disc_hidden = {512, 1024, 1024};
  c.n_accents = n_accents;
  return c;
}

ModelConfig mini_model_config(int input_channels, int num_labels, int n_accents) {
  ModelConfig c;
  c.input_channels = input_channels;
  c.encoder_blocks = {
      {"C1", BlockKind::kConv, 5, 32, 1, 1, 2, 1},
      {"B1", BlockKind::kBlock, 5, 32, 2, 1, 1, 1},
      {"C2", BlockKind::kConv, 5, 32, 1, 1, 1, 1},
      {"C3", BlockKind::kConv, 1, 64, 1, 1, 1, 1},
  };
  c.decoder_block = {"C4", BlockKind::kConv, 1, num_labels + 1, 1, 1, 1, 2};
  c.disc_hidden = {32, 64, 64};
  c.n_accents = n_accents;
  return c;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  auto block = [](const BlockConfig& b) {
    nlohmann::json j{{"name", b.name},
                     {"kind", kind_name(b.kind)},
                     {"kernel", b.kernel},
                     {"channels", b.channels},
                     {"repeats_within", b.repeats_within},
                     {"block_repeats", b.block_repeats},
                     {"stride", b.stride},
                     {"dilation", b.dilation}};
    if (b.in_channels != 0) j["in_channels"] = b.in_channels;
    return j;
  };
  nlohmann::json j;
  j["input_channels"] = c.input_channels;
  j["encoder_blocks"] = nlohmann::json::array();
  for (const auto& b : c.encoder_blocks) j["encoder_blocks"].push_back(block(b));
  j["decoder_block"] = block(c.decoder_block);
  j["disc_hidden"] = c.disc_hidden;
  j["disc_dropout"] = c.disc_dropout;
  j["n_accents"] = c.n_accents;
  j["bn_eps"] = c.bn_eps;
  j["bn_momentum"] = c.bn_momentum;
  return j;
}

namespace {

BlockConfig block_from_json(const nlohmann::json& j, const std::string& path) {
  detail::ObjectReader r(j, path);
  BlockConfig b;
  r.require("name", b.name);
  std::string kind = "conv";
  r.get("kind", kind);
  if (kind == "conv") {
    b.kind = BlockKind::kConv;
  } else if (kind == "block") {
    b.kind = BlockKind::kBlock;
  } else {
    throw ConfigError(r.path("kind") + ": must be \"conv\" or \"block\"");
  }
  r.require("kernel", b.kernel);
  r.require("channels", b.channels);
  r.get("repeats_within", b.repeats_within);
  r.get("block_repeats", b.block_repeats);
  r.get("stride", b.stride);
  r.get("dilation", b.dilation);
  r.get("in_channels", b.in_channels);
  r.finish();
  return b;
}

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path,
                                   ModelConfig c) {
  detail::ObjectReader r(j, path);
  r.get("input_channels", c.input_channels);
  if (const auto* blocks = r.child("encoder_blocks")) {
    if (!blocks->is_array()) throw ConfigError(r.path("encoder_blocks") + ": expected an array");
    c.encoder_blocks.clear();
    for (std::size_t i = 0; i < blocks->size(); ++i) {
      c.encoder_blocks.push_back(
          block_from_json((*blocks)[i], r.path("encoder_blocks") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* d = r.child("decoder_block")) c.decoder_block = block_from_json(*d, r.path("decoder_block"));
  r.get("disc_hidden", c.disc_hidden);
  r.get("disc_dropout", c.disc_dropout);
  r.get("n_accents", c.n_accents);
  r.get("bn_eps", c.bn_eps);
  r.get("bn_momentum", c.bn_momentum);
  r.finish();
  return c;
}

template <typename S>
std::vector<Parameter<S>*> ModelParams<S>::all() {
  std::vector<Parameter<S>*> out;
  for (auto* set : {&encoder, &decoder, &discriminator}) {
    for (auto& p : *set) out.push_back(&p);
  }
  return out;
}

template <typename S>
std::vector<const Parameter<S>*> ModelParams<S>::all() const {
  std::vector<const Parameter<S>*> out;
  for (const auto* set : {&encoder, &decoder, &discriminator}) {
    for (const auto& p : *set) out.push_back(&p);
  }
  return out;
}

template <typename S>
ModelParams<S> build_model(const ModelConfig& config, Rng& rng, bool with_discriminator) {
  validate_model_config(config);
  ModelParams<S> p;
  p.config = config;
  std::size_t c_in = static_cast<std::size_t>(config.input_channels);
  for (const auto& b : config.encoder_blocks) {
    const std::string prefix = "encoder." + b.name;
    const auto c_out = static_cast<std::size_t>(b.channels);
    const auto k = static_cast<std::size_t>(b.kernel);
    if (b.kind == BlockKind::kConv) {
      add_separable(p, p.encoder, prefix, c_in, c_out, k, true, rng);
    } else {
      for (int r = 0; r < b.block_repeats; ++r) {
        const std::string rep = prefix + ".rep" + std::to_string(r);
        if (c_in != c_out) {
          p.encoder.add(rep + ".shortcut", uniform_init<S>(Shape{c_out, c_in}, c_in, rng));
        }
        std::size_t width = c_in;
        for (int g = 0; g < b.repeats_within; ++g) {
          add_separable(p, p.encoder, rep + ".sub" + std::to_string(g), width, c_out, k, true, rng);
          width = c_out;
        }
        c_in = c_out;
      }
    }
    c_in = c_out;
  }
  const auto& d = config.decoder_block;
  add_separable(p, p.decoder, "decoder." + d.name, c_in, static_cast<std::size_t>(d.channels),
                static_cast<std::size_t>(d.kernel), false, rng);
  p.decoder.add("decoder." + d.name + ".bias", Tensor<S>(Shape{static_cast<std::size_t>(d.channels)}));
  if (with_discriminator) build_discriminator(p, rng);
  return p;
}

template <typename S>
void init_discriminator(ModelParams<S>& params, Rng& rng) {
  build_discriminator(params, rng);
}

template <typename S>
std::vector<Var> encoder_forward(Tape<S>& tape, ModelParams<S>& params,
                                 std::span<const Var> inputs, Mode mode,
                                 const InputMask& statistics) {
  const ModelConfig& config = params.config;
  for (Var x : inputs) {
    const Shape& s = tape.shape(x);
    if (s.size() != 2 || s[0] != static_cast<std::size_t>(config.input_channels)) {
      throw InvalidArgument("encoder_forward: input must be [" +
                            std::to_string(config.input_channels) + ", T], got " + shape_string(s));
    }
    if (s[1] < 1) throw InvalidArgument("encoder_forward: input axis T is empty");
  }
  std::vector<Var> xs(inputs.begin(), inputs.end());
  std::size_t c_in = static_cast<std::size_t>(config.input_channels);
  for (const auto& b : config.encoder_blocks) {
    const std::string prefix = "encoder." + b.name;
    const auto c_out = static_cast<std::size_t>(b.channels);
    const auto k = static_cast<std::size_t>(b.kernel);
    const auto dil = static_cast<std::size_t>(b.dilation);
    if (b.kind == BlockKind::kConv) {
      xs = relu_all(tape, separable_forward(tape, params, params.encoder, prefix, xs, k,
                                            static_cast<std::size_t>(b.stride), dil, mode,
                                            statistics));
    } else {
      for (int r = 0; r < b.block_repeats; ++r) {
        const std::string rep = prefix + ".rep" + std::to_string(r);
        std::vector<Var> shortcut = xs;
        if (c_in != c_out) {
          Var w = tape.param(params.encoder.at(rep + ".shortcut"));
          for (Var& s : shortcut) s = conv1d(tape, s, w, ConvMode::kPointwise, 1, 1);
        }
        std::vector<Var> h = xs;
        for (int g = 0; g < b.repeats_within; ++g) {
          h = separable_forward(tape, params, params.encoder, rep + ".sub" + std::to_string(g), h,
                                k, 1, dil, mode, statistics);
          if (g + 1 < b.repeats_within) h = relu_all(tape, std::move(h));
        }
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = relu(tape, add(tape, h[i], shortcut[i]));
        xs = std::move(h);
        c_in = c_out;
      }
    }
    c_in = c_out;
  }
  return xs;
}

template <typename S>
Var encoder_forward(Tape<S>& tape, ModelParams<S>& params, Var input, Mode mode) {
  const Var one[1] = {input};
  return encoder_forward(tape, params, std::span<const Var>(one), mode)[0];
}

template <typename S>
Var decoder_forward(Tape<S>& tape, const ModelParams<S>& params, Var features) {
  const auto& d = params.config.decoder_block;
  const Shape& fs = tape.shape(features);
  const auto c_in = static_cast<std::size_t>(params.config.feature_channels());
  if (fs.size() != 2 || fs[0] != c_in) {
    throw InvalidArgument("decoder_forward: features must be [" + std::to_string(c_in) +
                          ", T], got " + shape_string(fs));
  }
  const std::string prefix = "decoder." + d.name;
  Var h = features;
  if (d.kernel > 1) {
    h = conv1d(tape, h, tape.param(params.decoder.at(prefix + ".depthwise")), ConvMode::kDepthwise,
               1, static_cast<std::size_t>(d.dilation));
  }
  h = conv1d(tape, h, tape.param(params.decoder.at(prefix + ".pointwise")), ConvMode::kPointwise, 1,
             static_cast<std::size_t>(d.dilation));
  h = bias_add(tape, h, tape.param(params.decoder.at(prefix + ".bias")));
  return log_softmax(tape, transpose(tape, h));
}

template <typename S>
Var discriminator_head(Tape<S>& tape, const ModelParams<S>& params, Var pooled, Mode mode,
                       Rng& rng) {
  if (!params.has_discriminator()) throw StateError("discriminator_head: model has no discriminator");
  const Shape& ps = tape.shape(pooled);
  const auto width = static_cast<std::size_t>(params.config.feature_channels());
  if (ps != Shape{width}) {
    throw InvalidArgument("discriminator_head: pooled features must be [" + std::to_string(width) +
                          "], got " + shape_string(ps));
  }
  const auto& set = params.discriminator;
  Var h = pooled;
  for (std::size_t i = 0; i < params.config.disc_hidden.size(); ++i) {
    const std::string name = "disc.L" + std::to_string(i);
    h = linear(tape, h, tape.param(set.at(name + ".weight")), tape.param(set.at(name + ".bias")));
    if (i > 0) {
      h = relu(tape, h);
      h = dropout(tape, h, params.config.disc_dropout, mode, rng);
    }
  }
  h = linear(tape, h, tape.param(set.at("disc.out.weight")), tape.param(set.at("disc.out.bias")));
  return log_softmax(tape, h);
}

template <typename S>
Var discriminator_forward(Tape<S>& tape, const ModelParams<S>& params, Var features,
                          std::optional<S> grl_lambda, Mode mode, Rng& rng) {
  if (grl_lambda && *grl_lambda < S(0)) {
    throw InvalidArgument("discriminator_forward: lambda must be >= 0");
  }
  Var pooled = mean_over_time(tape, features);
  if (grl_lambda) pooled = grl(tape, pooled, *grl_lambda);
  return discriminator_head(tape, params, pooled, mode, rng);
}

#define ACCDAT_INSTANTIATE_MODEL(S)                                                              \
  template struct ModelParams<S>;                                                                \
  template ModelParams<S> build_model<S>(const ModelConfig&, Rng&, bool);                       \
  template void init_discriminator<S>(ModelParams<S>&, Rng&);                                    \
  template std::vector<Var> encoder_forward<S>(Tape<S>&, ModelParams<S>&, std::span<const Var>, \
                                               Mode, const InputMask&);                          \
  template Var encoder_forward<S>(Tape<S>&, ModelParams<S>&, Var, Mode);                         \
  template Var decoder_forward<S>(Tape<S>&, const ModelParams<S>&, Var);                         \
  template Var discriminator_head<S>(Tape<S>&, const ModelParams<S>&, Var, Mode, Rng&);          \
  template Var discriminator_forward<S>(Tape<S>&, const ModelParams<S>&, Var, std::optional<S>,  \
                                        Mode, Rng&);

ACCDAT_INSTANTIATE_MODEL(float)
ACCDAT_INSTANTIATE_MODEL(double)

}  // namespace accdat
