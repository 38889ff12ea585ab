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

#ifndef ACCDAT_TAPE_H_
#define ACCDAT_TAPE_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "accdat/error.h"
#include "accdat/tensor.h"

namespace accdat {

/// A named model tensor. Non-trainable parameters are recorded on a tape as
/// constants, so they never receive gradient and optimizers skip them.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  bool trainable = true;
};

/// Ordered collection of parameters with unique names.
template <typename S>
class ParameterSet {
 public:
  Parameter<S>& add(std::string name, Tensor<S> value, bool trainable = true) {
    if (index_.count(name)) {
      throw InvalidArgument("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, items_.size());
    items_.push_back(Parameter<S>{std::move(name), std::move(value), trainable});
    return items_.back();
  }

  Parameter<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  const Parameter<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  Parameter<S>& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw InvalidArgument("unknown parameter '" + name + "'");
  }
  const Parameter<S>& at(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw InvalidArgument("unknown parameter '" + name + "'");
  }

  void set_trainable(bool trainable) {
    for (auto& p : items_) p.trainable = trainable;
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<Parameter<S>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
using GradientMap = std::map<std::string, Tensor<S>>;

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Reverse-mode recording. Nodes are appended in forward order and the
/// backward sweep visits them in exactly the reverse order, so gradient
/// accumulation order is fixed. A tape belongs to one thread.
template <typename S>
class Tape {
 public:
  /// Receives the finished gradient of the node's output and accumulates
  /// into its inputs through grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor<S>&)>;

  Var constant(Tensor<S> value) { return push(std::move(value), false, {}, ""); }

  /// Leaf that requires gradient but is not a named parameter.
  Var variable(Tensor<S> value) { return push(std::move(value), true, {}, ""); }

  /// Leaf bound to a parameter. Repeated calls with the same name return the
  /// same node so uses share one gradient buffer.
  Var param(const Parameter<S>& p) {
    auto it = params_.find(p.name);
    if (it != params_.end()) return it->second;
    Var v = push(p.value, p.trainable, {}, p.name);
    params_.emplace(p.name, v);
    return v;
  }

  Var record(Tensor<S> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(Tensor<S> value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || node(in).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, "");
  }

  const Tensor<S>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of `v`, allocated as zeros on first use. Only
  /// meaningful for nodes that require gradient.
  Tensor<S>& grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.numel() != n.value.numel()) n.grad = Tensor<S>(n.value.shape());
    return n.grad;
  }

  /// Gradient of the last backward() target with respect to `v`; zeros when
  /// `v` was not reached.
  Tensor<S> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.numel() != n.value.numel()) return Tensor<S>(n.value.shape());
    return n.grad;
  }

  /// Clears every gradient buffer and back-propagates from a scalar node.
  void backward(Var loss) {
    if (node(loss).value.numel() != 1) {
      throw InvalidArgument("backward() needs a scalar loss, got shape " +
                            shape_string(node(loss).value.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor<S>();
    if (!node(loss).requires_grad) return;
    grad_buffer(loss)[0] = S(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward || n.grad.numel() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Gradients of every trainable parameter bound on this tape, keyed by
  /// parameter name. Parameters the loss does not reach map to zeros.
  GradientMap<S> parameter_gradients() const {
    GradientMap<S> out;
    for (const auto& [name, v] : params_) {
      if (node(v).requires_grad) out.emplace(name, grad(v));
    }
    return out;
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  Var push(Tensor<S> value, bool requires_grad, BackwardFn fn, std::string name) {
    nodes_.push_back(Node{std::move(value), Tensor<S>(), requires_grad,
                          std::move(fn), std::move(name)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw InvalidArgument("variable not on this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw InvalidArgument("variable not on this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::map<std::string, Var> params_;
};

/// Runs the backward sweep and returns the parameter gradient map.
template <typename S>
GradientMap<S> backward(Tape<S>& tape, Var loss) {
  tape.backward(loss);
  return tape.parameter_gradients();
}

}  // namespace accdat

#endif  // ACCDAT_TAPE_H_
