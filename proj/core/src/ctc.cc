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

#include "accdat/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "accdat/error.h"

namespace accdat {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

template <typename S>
void check_inputs(const Tensor<S>& log_probs, const LabelSequence& target, const char* op) {
  if (log_probs.rank() != 2 || log_probs.dim(1) < 1) {
    throw InvalidArgument(std::string(op) + ": log_probs must be [T, V+1], got " +
                          shape_string(log_probs.shape()));
  }
  const int blank = static_cast<int>(log_probs.dim(1)) - 1;
  for (int label : target) {
    if (label < 0 || label >= blank) {
      throw InvalidArgument(std::string(op) + ": label " + std::to_string(label) +
                            " outside [0, " + std::to_string(blank) + ")");
    }
  }
  for (S v : log_probs.data()) {
    if (std::isnan(static_cast<double>(v))) {
      throw InvalidArgument(std::string(op) + ": NaN in log_probs");
    }
  }
}

}  // namespace

std::size_t ctc_min_frames(const LabelSequence& target) {
  std::size_t frames = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++frames;
  }
  return frames;
}

LabelSequence ctc_collapse(const std::vector<int>& path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

template <typename S>
CtcResult<S> ctc_loss_grad(const Tensor<S>& log_probs, const LabelSequence& target) {
  check_inputs(log_probs, target, "ctc_loss_grad");
  const std::size_t frames = log_probs.dim(0);
  const std::size_t width = log_probs.dim(1);
  const int blank = static_cast<int>(width) - 1;
  if (frames < ctc_min_frames(target)) {
    throw InfeasibleTarget("ctc_loss_grad: target of length " + std::to_string(target.size()) +
                           " needs at least " + std::to_string(ctc_min_frames(target)) +
                           " frames, got " + std::to_string(frames));
  }

  // Extended target: blank, l1, blank, l2, ..., blank.
  const std::size_t ext = 2 * target.size() + 1;
  std::vector<int> labels(ext, blank);
  for (std::size_t i = 0; i < target.size(); ++i) labels[2 * i + 1] = target[i];

  auto lp = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(log_probs.at(t, static_cast<std::size_t>(labels[s])));
  };
  // Transition s-2 -> s is allowed onto a non-blank that differs from the
  // label two positions back.
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && labels[s] != blank && labels[s] != labels[s - 2];
  };

  std::vector<double> alpha(frames * ext, kNegInf);
  std::vector<double> beta(frames * ext, kNegInf);

  alpha[0] = lp(0, 0);
  if (ext > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < ext; ++s) {
      double a = alpha[(t - 1) * ext + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * ext + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * ext + s - 2]);
      alpha[t * ext + s] = a == kNegInf ? kNegInf : a + lp(t, s);
    }
  }

  const std::size_t last = frames - 1;
  beta[last * ext + ext - 1] = lp(last, ext - 1);
  if (ext > 1) beta[last * ext + ext - 2] = lp(last, ext - 2);
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t s = 0; s < ext; ++s) {
      double b = beta[(t + 1) * ext + s];
      if (s + 1 < ext) b = log_add(b, beta[(t + 1) * ext + s + 1]);
      if (s + 2 < ext && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * ext + s + 2]);
      beta[t * ext + s] = b == kNegInf ? kNegInf : b + lp(t, s);
    }
  }

  double log_likelihood = alpha[last * ext + ext - 1];
  if (ext > 1) log_likelihood = log_add(log_likelihood, alpha[last * ext + ext - 2]);
  if (!std::isfinite(log_likelihood)) {
    throw NumericError("ctc_loss_grad: target has zero probability under log_probs");
  }

  CtcResult<S> result;
  result.loss = -log_likelihood;
  result.grad = Tensor<S>(log_probs.shape());
  std::vector<double> occupancy(width);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < ext; ++s) {
      const double ab = alpha[t * ext + s] + beta[t * ext + s];
      auto& o = occupancy[static_cast<std::size_t>(labels[s])];
      o = log_add(o, ab);
    }
    for (std::size_t k = 0; k < width; ++k) {
      if (occupancy[k] == kNegInf) continue;
      // alpha and beta both include the emission at t, so divide it out once.
      const double g = -std::exp(occupancy[k] - static_cast<double>(log_probs.at(t, k)) -
                                 log_likelihood);
      result.grad.at(t, k) = static_cast<S>(g);
    }
  }
  return result;
}

template <typename S>
double ctc_brute_force(const Tensor<S>& log_probs, const LabelSequence& target,
                       double max_paths) {
  check_inputs(log_probs, target, "ctc_brute_force");
  const std::size_t frames = log_probs.dim(0);
  const std::size_t width = log_probs.dim(1);
  const int blank = static_cast<int>(width) - 1;
  if (std::pow(static_cast<double>(width), static_cast<double>(frames)) > max_paths) {
    throw ResourceLimit("ctc_brute_force: " + std::to_string(width) + "^" +
                        std::to_string(frames) + " paths exceeds the enumeration guard");
  }
  std::vector<int> path(frames, 0);
  double total = kNegInf;
  while (true) {
    if (ctc_collapse(path, blank) == target) {
      double lp = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        lp += static_cast<double>(log_probs.at(t, static_cast<std::size_t>(path[t])));
      }
      total = log_add(total, lp);
    }
    std::size_t t = 0;
    while (t < frames && ++path[t] == static_cast<int>(width)) path[t++] = 0;
    if (t == frames) break;
  }
  return -total;
}

template <typename S>
LabelSequence greedy_decode(const Tensor<S>& log_probs) {
  if (log_probs.rank() != 2 || log_probs.dim(1) < 1) {
    throw InvalidArgument("greedy_decode: log_probs must be [T, V+1], got " +
                          shape_string(log_probs.shape()));
  }
  const std::size_t width = log_probs.dim(1);
  std::vector<int> path(log_probs.dim(0));
  for (std::size_t t = 0; t < path.size(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < width; ++k) {
      if (log_probs.at(t, k) > log_probs.at(t, best)) best = k;
    }
    path[t] = static_cast<int>(best);
  }
  return ctc_collapse(path, static_cast<int>(width) - 1);
}

template <typename S>
Var ctc_loss(Tape<S>& tape, Var log_probs, const LabelSequence& target) {
  CtcResult<S> r = ctc_loss_grad(tape.value(log_probs), target);
  return tape.record(Tensor<S>::scalar(static_cast<S>(r.loss)), {log_probs},
                     [log_probs, grad = std::move(r.grad)](Tape<S>& tp, const Tensor<S>& g) {
                       auto& dx = tp.grad_buffer(log_probs);
                       for (std::size_t i = 0; i < grad.numel(); ++i) dx[i] += g[0] * grad[i];
                     });
}

#define ACCDAT_INSTANTIATE_CTC(S)                                                   \
  template CtcResult<S> ctc_loss_grad<S>(const Tensor<S>&, const LabelSequence&);   \
  template double ctc_brute_force<S>(const Tensor<S>&, const LabelSequence&, double); \
  template LabelSequence greedy_decode<S>(const Tensor<S>&);                         \
  template Var ctc_loss<S>(Tape<S>&, Var, const LabelSequence&);

ACCDAT_INSTANTIATE_CTC(float)
ACCDAT_INSTANTIATE_CTC(double)

}  // namespace accdat
