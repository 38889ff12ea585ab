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

#include "accdat/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace accdat {
namespace {

std::string axis_error(const char* op, const std::string& what) {
  return std::string(op) + ": " + what;
}

struct ConvGeometry {
  std::size_t frames_in;
  std::size_t frames_out;
  std::size_t pad_left;
};

ConvGeometry same_padding(std::size_t frames, std::size_t kernel, std::size_t stride,
                          std::size_t dilation) {
  const std::size_t out = conv_output_length(frames, stride);
  const std::size_t span = (kernel - 1) * dilation + 1;
  const std::size_t needed = (out - 1) * stride + span;
  const std::size_t pad_total = needed > frames ? needed - frames : 0;
  return {frames, out, pad_total / 2};
}

}  // namespace

template <typename S>
Var conv1d(Tape<S>& tape, Var input, Var kernel, ConvMode mode, std::size_t stride,
           std::size_t dilation) {
  const Shape& xs = tape.shape(input);
  const Shape& ks = tape.shape(kernel);
  if (stride < 1) throw InvalidArgument("conv1d: stride must be >= 1");
  if (dilation < 1) throw InvalidArgument("conv1d: dilation must be >= 1");
  if (xs.size() != 2 && xs.size() != 3) {
    throw InvalidArgument(axis_error("conv1d", "input must be [C,T] or [B,C,T], got " +
                                                   shape_string(xs)));
  }
  if (ks.size() != 2) {
    throw InvalidArgument(axis_error("conv1d", "kernel must be rank 2, got " +
                                                   shape_string(ks)));
  }
  const bool batched = xs.size() == 3;
  const std::size_t batch = batched ? xs[0] : 1;
  const std::size_t c_in = xs[xs.size() - 2];
  const std::size_t frames = xs.back();
  if (frames == 0) throw InvalidArgument("conv1d: input axis T (time) is empty");

  std::size_t c_out = 0;
  std::size_t k = 1;
  if (mode == ConvMode::kDepthwise) {
    if (ks[0] != c_in) {
      throw InvalidArgument(axis_error(
          "conv1d", "depthwise kernel axis 0 (channels) is " + std::to_string(ks[0]) +
                        " but input axis C is " + std::to_string(c_in)));
    }
    c_out = c_in;
    k = ks[1];
    if (k == 0) throw InvalidArgument("conv1d: kernel axis 1 (K) is empty");
  } else {
    if (ks[1] != c_in) {
      throw InvalidArgument(axis_error(
          "conv1d", "pointwise kernel axis 1 (C_in) is " + std::to_string(ks[1]) +
                        " but input axis C is " + std::to_string(c_in)));
    }
    c_out = ks[0];
  }

  const ConvGeometry geo = same_padding(frames, k, stride, dilation);
  const std::size_t t_out = geo.frames_out;
  Shape out_shape = batched ? Shape{batch, c_out, t_out} : Shape{c_out, t_out};
  Tensor<S> out(out_shape);

  const auto x = tape.value(input).data();
  const auto w = tape.value(kernel).data();
  auto y = out.data();
  const std::size_t in_stride = c_in * frames;
  const std::size_t out_stride = c_out * t_out;

  for (std::size_t b = 0; b < batch; ++b) {
    const S* xb = x.data() + b * in_stride;
    S* yb = y.data() + b * out_stride;
    if (mode == ConvMode::kDepthwise) {
      for (std::size_t c = 0; c < c_in; ++c) {
        const S* xc = xb + c * frames;
        const S* wc = w.data() + c * k;
        S* yc = yb + c * t_out;
        for (std::size_t t = 0; t < t_out; ++t) {
          S acc = 0;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride + j * dilation) -
                                       static_cast<std::ptrdiff_t>(geo.pad_left);
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(frames)) acc += wc[j] * xc[idx];
          }
          yc[t] = acc;
        }
      }
    } else {
      for (std::size_t o = 0; o < c_out; ++o) {
        S* yo = yb + o * t_out;
        for (std::size_t i = 0; i < c_in; ++i) {
          const S wi = w[o * c_in + i];
          const S* xi = xb + i * frames;
          for (std::size_t t = 0; t < t_out; ++t) yo[t] += wi * xi[t * stride];
        }
      }
    }
  }

  return tape.record(
      std::move(out), {input, kernel},
      [input, kernel, mode, stride, dilation, geo, batch, c_in, c_out, k, frames,
       t_out](Tape<S>& tp, const Tensor<S>& g) {
        const auto xv = tp.value(input).data();
        const auto wv = tp.value(kernel).data();
        const auto gv = g.data();
        const bool want_x = tp.requires_grad(input);
        const bool want_w = tp.requires_grad(kernel);
        S* dx = want_x ? tp.grad_buffer(input).data().data() : nullptr;
        S* dw = want_w ? tp.grad_buffer(kernel).data().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          const S* xb = xv.data() + b * c_in * frames;
          const S* gb = gv.data() + b * c_out * t_out;
          S* dxb = dx ? dx + b * c_in * frames : nullptr;
          if (mode == ConvMode::kDepthwise) {
            for (std::size_t c = 0; c < c_in; ++c) {
              for (std::size_t t = 0; t < t_out; ++t) {
                const S gt = gb[c * t_out + t];
                for (std::size_t j = 0; j < k; ++j) {
                  const std::ptrdiff_t idx =
                      static_cast<std::ptrdiff_t>(t * stride + j * dilation) -
                      static_cast<std::ptrdiff_t>(geo.pad_left);
                  if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(frames)) continue;
                  if (dxb) dxb[c * frames + idx] += wv[c * k + j] * gt;
                  if (dw) dw[c * k + j] += xb[c * frames + idx] * gt;
                }
              }
            }
          } else {
            for (std::size_t o = 0; o < c_out; ++o) {
              const S* go = gb + o * t_out;
              for (std::size_t i = 0; i < c_in; ++i) {
                const S* xi = xb + i * frames;
                if (dw) {
                  S acc = 0;
                  for (std::size_t t = 0; t < t_out; ++t) acc += go[t] * xi[t * stride];
                  dw[o * c_in + i] += acc;
                }
                if (dxb) {
                  const S wi = wv[o * c_in + i];
                  S* dxi = dxb + i * frames;
                  for (std::size_t t = 0; t < t_out; ++t) dxi[t * stride] += wi * go[t];
                }
              }
            }
          }
        }
      });
}

template <typename S>
Var bias_add(Tape<S>& tape, Var input, Var bias) {
  const Shape& xs = tape.shape(input);
  const Shape& bs = tape.shape(bias);
  if (xs.size() != 2) throw InvalidArgument("bias_add: input must be [C,T], got " + shape_string(xs));
  if (bs.size() != 1 || bs[0] != xs[0]) {
    throw InvalidArgument("bias_add: bias axis 0 is " + shape_string(bs) +
                          " but input axis C is " + std::to_string(xs[0]));
  }
  const std::size_t channels = xs[0];
  const std::size_t frames = xs[1];
  Tensor<S> out = tape.value(input);
  const auto b = tape.value(bias).data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < frames; ++t) out[c * frames + t] += b[c];
  }
  return tape.record(std::move(out), {input, bias},
                     [input, bias, channels, frames](Tape<S>& tp, const Tensor<S>& g) {
                       if (tp.requires_grad(input)) {
                         auto& dx = tp.grad_buffer(input);
                         for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
                       }
                       if (tp.requires_grad(bias)) {
                         auto& db = tp.grad_buffer(bias);
                         for (std::size_t c = 0; c < channels; ++c) {
                           S acc = 0;
                           for (std::size_t t = 0; t < frames; ++t) acc += g[c * frames + t];
                           db[c] += acc;
                         }
                       }
                     });
}

namespace {

// Frames [start, start + len) of a [C, T] node.
template <typename S>
Var slice_time(Tape<S>& tape, Var input, std::size_t start, std::size_t len) {
  const Shape& xs = tape.shape(input);
  const std::size_t channels = xs[0];
  const std::size_t frames = xs[1];
  Tensor<S> out(Shape{channels, len});
  const auto x = tape.value(input).data();
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(x.data() + c * frames + start, len, out.data().data() + c * len);
  }
  return tape.record(std::move(out), {input},
                     [input, start, len, channels, frames](Tape<S>& tp, const Tensor<S>& g) {
                       auto& dx = tp.grad_buffer(input);
                       for (std::size_t c = 0; c < channels; ++c) {
                         for (std::size_t t = 0; t < len; ++t) {
                           dx[c * frames + start + t] += g[c * len + t];
                         }
                       }
                     });
}

}  // namespace

template <typename S>
std::vector<Var> batchnorm1d(Tape<S>& tape, std::span<const Var> inputs, Var gamma,
                             Var beta, BatchNormState<S>* state, Mode mode,
                             const BatchNormOptions& options, const InputMask& statistics) {
  if (inputs.empty()) return {};
  if (!statistics.empty() && statistics.size() != inputs.size()) {
    throw InvalidArgument("batchnorm1d: statistics mask has " + std::to_string(statistics.size()) +
                          " entries for " + std::to_string(inputs.size()) + " inputs");
  }
  std::vector<bool> in_stats(inputs.size(), true);
  for (std::size_t i = 0; i < statistics.size(); ++i) in_stats[i] = statistics[i] != 0;
  const std::size_t channels = tape.shape(inputs[0])[0];
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (Var v : inputs) {
    const Shape& s = tape.shape(v);
    if (s.size() != 2) throw InvalidArgument("batchnorm1d: input must be [C,T], got " + shape_string(s));
    if (s[0] != channels) {
      throw InvalidArgument("batchnorm1d: input axis C is " + std::to_string(s[0]) +
                            ", expected " + std::to_string(channels));
    }
    lengths.push_back(s[1]);
    total += s[1];
  }
  if (tape.shape(gamma) != Shape{channels} || tape.shape(beta) != Shape{channels}) {
    throw InvalidArgument("batchnorm1d: gamma/beta axis 0 must equal C=" + std::to_string(channels));
  }
  if (total == 0) throw InvalidArgument("batchnorm1d: axis T is empty");
  std::size_t stat_total = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (in_stats[i]) stat_total += lengths[i];
  }
  if (mode == Mode::kTrain && stat_total == 0) {
    throw InvalidArgument("batchnorm1d: statistics mask selects no frames");
  }

  Tensor<S> mean(Shape{channels});
  Tensor<S> var(Shape{channels});
  if (mode == Mode::kTrain) {
    for (std::size_t c = 0; c < channels; ++c) {
      S acc = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!in_stats[i]) continue;
        const auto x = tape.value(inputs[i]).data();
        for (std::size_t t = 0; t < lengths[i]; ++t) acc += x[c * lengths[i] + t];
      }
      mean[c] = acc / static_cast<S>(stat_total);
      S sq = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!in_stats[i]) continue;
        const auto x = tape.value(inputs[i]).data();
        for (std::size_t t = 0; t < lengths[i]; ++t) {
          const S d = x[c * lengths[i] + t] - mean[c];
          sq += d * d;
        }
      }
      var[c] = sq / static_cast<S>(stat_total);
    }
    if (state) {
      if (!state->initialized()) {
        state->running_mean = mean;
        state->running_var = var;
      } else {
        const S m = static_cast<S>(options.momentum);
        for (std::size_t c = 0; c < channels; ++c) {
          state->running_mean[c] = (S(1) - m) * state->running_mean[c] + m * mean[c];
          state->running_var[c] = (S(1) - m) * state->running_var[c] + m * var[c];
        }
      }
      ++state->batches_tracked;
    }
  } else {
    if (!state) throw InvalidArgument("batchnorm1d: eval mode needs running statistics");
    if (!state->initialized()) {
      throw StateError("batchnorm1d: eval mode with uninitialized running statistics");
    }
    mean = state->running_mean;
    var = state->running_var;
  }

  Tensor<S> inv_std(Shape{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    inv_std[c] = S(1) / std::sqrt(var[c] + static_cast<S>(options.eps));
  }

  // One joint node over the time-concatenated batch; per-input outputs are
  // slices of it so the statistics' coupling is differentiated exactly once.
  Tensor<S> xhat(Shape{channels, total});
  Tensor<S> joint(Shape{channels, total});
  const auto gv = tape.value(gamma).data();
  const auto bv = tape.value(beta).data();
  {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto x = tape.value(inputs[i]).data();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < lengths[i]; ++t) {
          const S h = (x[c * lengths[i] + t] - mean[c]) * inv_std[c];
          xhat[c * total + offset + t] = h;
          joint[c * total + offset + t] = gv[c] * h + bv[c];
        }
      }
      offset += lengths[i];
    }
  }

  std::vector<Var> deps(inputs.begin(), inputs.end());
  deps.push_back(gamma);
  deps.push_back(beta);
  std::vector<Var> in_copy(inputs.begin(), inputs.end());
  const bool train = mode == Mode::kTrain;
  Var joint_var = tape.record(
      std::move(joint), deps,
      [in_copy, lengths, in_stats, gamma, beta, channels, total, stat_total, train,
       xhat = std::move(xhat), inv_std](Tape<S>& tp, const Tensor<S>& g) {
        const auto gam = tp.value(gamma).data();
        if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
          for (std::size_t c = 0; c < channels; ++c) {
            S dg = 0;
            S db = 0;
            for (std::size_t t = 0; t < total; ++t) {
              dg += g[c * total + t] * xhat[c * total + t];
              db += g[c * total + t];
            }
            if (tp.requires_grad(gamma)) tp.grad_buffer(gamma)[c] += dg;
            if (tp.requires_grad(beta)) tp.grad_buffer(beta)[c] += db;
          }
        }
        bool any_input = false;
        for (Var v : in_copy) any_input = any_input || tp.requires_grad(v);
        if (!any_input) return;
        // The statistics depend on the selected inputs only, but every output
        // depends on the statistics, so the sums run over all outputs.
        const S n = static_cast<S>(stat_total);
        for (std::size_t c = 0; c < channels; ++c) {
          S sum_dxhat = 0;
          S sum_dxhat_xhat = 0;
          if (train) {
            for (std::size_t t = 0; t < total; ++t) {
              const S d = g[c * total + t] * gam[c];
              sum_dxhat += d;
              sum_dxhat_xhat += d * xhat[c * total + t];
            }
          }
          std::size_t offset = 0;
          for (std::size_t i = 0; i < in_copy.size(); ++i) {
            const std::size_t len = lengths[i];
            if (tp.requires_grad(in_copy[i])) {
              auto& dx = tp.grad_buffer(in_copy[i]);
              for (std::size_t t = 0; t < len; ++t) {
                const std::size_t j = c * total + offset + t;
                const S d = g[j] * gam[c];
                if (train && in_stats[i]) {
                  dx[c * len + t] +=
                      inv_std[c] / n * (n * d - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                } else {
                  dx[c * len + t] += d * inv_std[c];
                }
              }
            }
            offset += len;
          }
        }
      });

  std::vector<Var> outs;
  std::size_t offset = 0;
  for (std::size_t len : lengths) {
    outs.push_back(slice_time(tape, joint_var, offset, len));
    offset += len;
  }
  return outs;
}

template <typename S>
Var batchnorm1d(Tape<S>& tape, Var input, Var gamma, Var beta, BatchNormState<S>* state,
                Mode mode, const BatchNormOptions& options) {
  const Var one[1] = {input};
  return batchnorm1d(tape, std::span<const Var>(one), gamma, beta, state, mode, options)[0];
}

template <typename S>
Var linear(Tape<S>& tape, Var input, Var weight, Var bias) {
  const Shape& xs = tape.shape(input);
  const Shape& ws = tape.shape(weight);
  const Shape& bs = tape.shape(bias);
  if (ws.size() != 2) throw InvalidArgument("linear: weight must be [D_out,D_in], got " + shape_string(ws));
  if (xs.size() != 1 && xs.size() != 2) {
    throw InvalidArgument("linear: input must be [D_in] or [B,D_in], got " + shape_string(xs));
  }
  const std::size_t d_out = ws[0];
  const std::size_t d_in = ws[1];
  if (xs.back() != d_in) {
    throw InvalidArgument("linear: input axis D_in is " + std::to_string(xs.back()) +
                          " but weight axis 1 is " + std::to_string(d_in));
  }
  if (bs != Shape{d_out}) {
    throw InvalidArgument("linear: bias shape " + shape_string(bs) + " does not match D_out=" +
                          std::to_string(d_out));
  }
  const std::size_t rows = xs.size() == 2 ? xs[0] : 1;
  Tensor<S> out(xs.size() == 2 ? Shape{rows, d_out} : Shape{d_out});
  const auto x = tape.value(input).data();
  const auto w = tape.value(weight).data();
  const auto b = tape.value(bias).data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < d_out; ++o) {
      S acc = b[o];
      for (std::size_t i = 0; i < d_in; ++i) acc += w[o * d_in + i] * x[r * d_in + i];
      out[r * d_out + o] = acc;
    }
  }
  return tape.record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, rows, d_in, d_out](Tape<S>& tp, const Tensor<S>& g) {
        const auto xv = tp.value(input).data();
        const auto wv = tp.value(weight).data();
        if (tp.requires_grad(input)) {
          auto& dx = tp.grad_buffer(input);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < d_out; ++o) {
              const S go = g[r * d_out + o];
              for (std::size_t i = 0; i < d_in; ++i) dx[r * d_in + i] += wv[o * d_in + i] * go;
            }
          }
        }
        if (tp.requires_grad(weight)) {
          auto& dw = tp.grad_buffer(weight);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < d_out; ++o) {
              const S go = g[r * d_out + o];
              for (std::size_t i = 0; i < d_in; ++i) dw[o * d_in + i] += go * xv[r * d_in + i];
            }
          }
        }
        if (tp.requires_grad(bias)) {
          auto& db = tp.grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < d_out; ++o) db[o] += g[r * d_out + o];
          }
        }
      });
}

template <typename S>
Var relu(Tape<S>& tape, Var input) {
  Tensor<S> out = tape.value(input);
  for (auto& v : out.data()) v = v > S(0) ? v : S(0);
  return tape.record(std::move(out), {input}, [input](Tape<S>& tp, const Tensor<S>& g) {
    const auto x = tp.value(input).data();
    auto& dx = tp.grad_buffer(input);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x[i] > S(0)) dx[i] += g[i];
    }
  });
}

template <typename S>
Var add(Tape<S>& tape, Var a, Var b) {
  if (tape.shape(a) != tape.shape(b)) {
    throw InvalidArgument("add: shape " + shape_string(tape.shape(a)) + " vs " +
                          shape_string(tape.shape(b)));
  }
  Tensor<S> out = tape.value(a);
  const auto bv = tape.value(b).data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& tp, const Tensor<S>& g) {
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      auto& d = tp.grad_buffer(v);
      for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
    }
  });
}

template <typename S>
Var scale(Tape<S>& tape, Var input, S factor) {
  Tensor<S> out = tape.value(input);
  for (auto& v : out.data()) v *= factor;
  return tape.record(std::move(out), {input}, [input, factor](Tape<S>& tp, const Tensor<S>& g) {
    auto& dx = tp.grad_buffer(input);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += factor * g[i];
  });
}

template <typename S>
Var dropout(Tape<S>& tape, Var input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw InvalidArgument("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return input;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  Tensor<S> mask(tape.shape(input));
  for (auto& m : mask.data()) m = uniform01(rng) < p ? S(0) : keep_scale;
  Tensor<S> out = tape.value(input);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return tape.record(std::move(out), {input},
                     [input, mask = std::move(mask)](Tape<S>& tp, const Tensor<S>& g) {
                       auto& dx = tp.grad_buffer(input);
                       for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += mask[i] * g[i];
                     });
}

template <typename S>
Var mean_over_time(Tape<S>& tape, Var input) {
  const Shape& xs = tape.shape(input);
  if (xs.size() != 2 && xs.size() != 3) {
    throw InvalidArgument("mean_over_time: input must be [C,T] or [B,C,T], got " + shape_string(xs));
  }
  const std::size_t frames = xs.back();
  if (frames == 0) throw InvalidArgument("mean_over_time: axis T is empty");
  Shape out_shape(xs.begin(), xs.end() - 1);
  const std::size_t rows = shape_numel(out_shape);
  Tensor<S> out(out_shape);
  const auto x = tape.value(input).data();
  for (std::size_t r = 0; r < rows; ++r) {
    S acc = 0;
    for (std::size_t t = 0; t < frames; ++t) acc += x[r * frames + t];
    out[r] = acc / static_cast<S>(frames);
  }
  return tape.record(std::move(out), {input},
                     [input, rows, frames](Tape<S>& tp, const Tensor<S>& g) {
                       auto& dx = tp.grad_buffer(input);
                       const S inv = S(1) / static_cast<S>(frames);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t t = 0; t < frames; ++t) dx[r * frames + t] += g[r] * inv;
                       }
                     });
}

template <typename S>
Var log_softmax(Tape<S>& tape, Var input) {
  const Shape& xs = tape.shape(input);
  if (xs.empty() || xs.back() == 0) {
    throw InvalidArgument("log_softmax: last axis must be non-empty, got " + shape_string(xs));
  }
  const std::size_t width = xs.back();
  const std::size_t rows = shape_numel(xs) / width;
  Tensor<S> out = tape.value(input);
  for (std::size_t r = 0; r < rows; ++r) {
    S* row = out.data().data() + r * width;
    const S mx = *std::max_element(row, row + width);
    S acc = 0;
    for (std::size_t j = 0; j < width; ++j) acc += std::exp(row[j] - mx);
    const S lse = mx + std::log(acc);
    for (std::size_t j = 0; j < width; ++j) row[j] -= lse;
  }
  Tensor<S> saved = out;
  return tape.record(std::move(out), {input},
                     [input, rows, width, y = std::move(saved)](Tape<S>& tp, const Tensor<S>& g) {
                       auto& dx = tp.grad_buffer(input);
                       for (std::size_t r = 0; r < rows; ++r) {
                         S gs = 0;
                         for (std::size_t j = 0; j < width; ++j) gs += g[r * width + j];
                         for (std::size_t j = 0; j < width; ++j) {
                           dx[r * width + j] += g[r * width + j] - std::exp(y[r * width + j]) * gs;
                         }
                       }
                     });
}

template <typename S>
Var transpose(Tape<S>& tape, Var input) {
  const Shape& xs = tape.shape(input);
  if (xs.size() != 2) throw InvalidArgument("transpose: input must be rank 2, got " + shape_string(xs));
  const std::size_t rows = xs[0];
  const std::size_t cols = xs[1];
  Tensor<S> out(Shape{cols, rows});
  const auto x = tape.value(input).data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x[r * cols + c];
  }
  return tape.record(std::move(out), {input}, [input, rows, cols](Tape<S>& tp, const Tensor<S>& g) {
    auto& dx = tp.grad_buffer(input);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += g[c * rows + r];
    }
  });
}

template <typename S>
Var sum(Tape<S>& tape, Var input) {
  S acc = 0;
  for (S v : tape.value(input).data()) acc += v;
  return tape.record(Tensor<S>::scalar(acc), {input}, [input](Tape<S>& tp, const Tensor<S>& g) {
    auto& dx = tp.grad_buffer(input);
    for (auto& d : dx.data()) d += g[0];
  });
}

template <typename S>
Var pick(Tape<S>& tape, Var input, std::size_t index) {
  const Shape& xs = tape.shape(input);
  if (xs.size() != 1 || index >= xs[0]) {
    throw InvalidArgument("pick: index " + std::to_string(index) + " out of range for shape " +
                          shape_string(xs));
  }
  return tape.record(Tensor<S>::scalar(tape.value(input)[index]), {input},
                     [input, index](Tape<S>& tp, const Tensor<S>& g) {
                       tp.grad_buffer(input)[index] += g[0];
                     });
}

template <typename S>
Var weighted_sum(Tape<S>& tape, std::span<const Var> scalars, std::span<const S> weights) {
  if (scalars.size() != weights.size()) {
    throw InvalidArgument("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                          std::to_string(weights.size()) + " weights");
  }
  S acc = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (tape.value(scalars[i]).numel() != 1) {
      throw InvalidArgument("weighted_sum: term " + std::to_string(i) + " is not a scalar");
    }
    acc += weights[i] * tape.value(scalars[i])[0];
  }
  std::vector<Var> terms(scalars.begin(), scalars.end());
  std::vector<S> w(weights.begin(), weights.end());
  return tape.record(Tensor<S>::scalar(acc), terms,
                     [terms, w](Tape<S>& tp, const Tensor<S>& g) {
                       for (std::size_t i = 0; i < terms.size(); ++i) {
                         if (tp.requires_grad(terms[i])) tp.grad_buffer(terms[i])[0] += w[i] * g[0];
                       }
                     });
}

template <typename S>
Var grl(Tape<S>& tape, Var input, S lambda) {
  Tensor<S> out = tape.value(input);
  return tape.record(std::move(out), {input}, [input, lambda](Tape<S>& tp, const Tensor<S>& g) {
    auto& dx = tp.grad_buffer(input);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += -lambda * g[i];
  });
}

#define ACCDAT_INSTANTIATE_OPS(S)                                                           \
  template Var conv1d<S>(Tape<S>&, Var, Var, ConvMode, std::size_t, std::size_t);           \
  template Var bias_add<S>(Tape<S>&, Var, Var);                                             \
  template std::vector<Var> batchnorm1d<S>(Tape<S>&, std::span<const Var>, Var, Var,        \
                                           BatchNormState<S>*, Mode, const BatchNormOptions&,  \
                                           const InputMask&);                                  \
  template Var batchnorm1d<S>(Tape<S>&, Var, Var, Var, BatchNormState<S>*, Mode,            \
                              const BatchNormOptions&);                                     \
  template Var linear<S>(Tape<S>&, Var, Var, Var);                                          \
  template Var relu<S>(Tape<S>&, Var);                                                      \
  template Var add<S>(Tape<S>&, Var, Var);                                                  \
  template Var scale<S>(Tape<S>&, Var, S);                                                  \
  template Var dropout<S>(Tape<S>&, Var, double, Mode, Rng&);                               \
  template Var mean_over_time<S>(Tape<S>&, Var);                                            \
  template Var log_softmax<S>(Tape<S>&, Var);                                               \
  template Var transpose<S>(Tape<S>&, Var);                                                 \
  template Var sum<S>(Tape<S>&, Var);                                                       \
  template Var pick<S>(Tape<S>&, Var, std::size_t);                                         \
  template Var weighted_sum<S>(Tape<S>&, std::span<const Var>, std::span<const S>);         \
  template Var grl<S>(Tape<S>&, Var, S);

ACCDAT_INSTANTIATE_OPS(float)
ACCDAT_INSTANTIATE_OPS(double)

}  // namespace accdat
