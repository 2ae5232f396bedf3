// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_AD_TAPE_HPP
#define FLOWPLAN_AD_TAPE_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowplan/ad/tensor.hpp"

namespace flowplan::ad {

/// Raised when a forward pass produces a non-finite value or an operation
/// receives incompatible shapes.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Var {
  int id{-1};
  bool valid() const { return id >= 0; }
};

/// Gradients accumulated for registered parameters, indexed by parameter id.
/// Entries never touched by the tape stay empty and read as zero.
template <typename Scalar>
struct GradientMap {
  std::vector<Tensor<Scalar>> grads;

  Tensor<Scalar>& slot(int param_id, const std::vector<int>& shape) {
    if (param_id >= static_cast<int>(grads.size())) grads.resize(static_cast<std::size_t>(param_id) + 1);
    auto& g = grads[static_cast<std::size_t>(param_id)];
    if (g.shape.empty() && !shape.empty()) g = Tensor<Scalar>(shape);
    return g;
  }
};

/// Adds b into a (shapes must agree; empty slots adopt the other's tensor).
template <typename Scalar>
void accumulate(GradientMap<Scalar>& a, const GradientMap<Scalar>& b) {
  if (b.grads.size() > a.grads.size()) a.grads.resize(b.grads.size());
  for (std::size_t i = 0; i < b.grads.size(); ++i) {
    const auto& src = b.grads[i];
    if (src.shape.empty()) continue;
    auto& dst = a.grads[i];
    if (dst.shape.empty()) {
      dst = src;
    } else {
      for (std::size_t k = 0; k < src.data.size(); ++k) dst.data[k] += src.data[k];
    }
  }
}

/// Named parameter registry. Models own one store; tapes reference entries by
/// id so gradients can be routed back without string lookups.
template <typename Scalar>
class ParamStore {
 public:
  int add(const std::string& name, Tensor<Scalar> init) {
    for (const auto& e : entries_) {
      if (e.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
    }
    entries_.push_back({name, std::move(init)});
    return static_cast<int>(entries_.size()) - 1;
  }
  int count() const { return static_cast<int>(entries_.size()); }
  Tensor<Scalar>& value(int id) { return entries_[static_cast<std::size_t>(id)].value; }
  const Tensor<Scalar>& value(int id) const { return entries_[static_cast<std::size_t>(id)].value; }
  const std::string& name(int id) const { return entries_[static_cast<std::size_t>(id)].name; }
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

 private:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
  };
  std::vector<Entry> entries_;
};

/// Dynamic reverse-mode tape. Nodes are appended in execution order, so a
/// single reverse sweep visits each node exactly once in reverse topological
/// order. With recording off the tape stores values only and backward is
/// unavailable (inference mode).
template <typename Scalar>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var input(Tensor<Scalar> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad && recording_, nullptr, "input", -1);
  }

  Var param(const ParamStore<Scalar>& store, int param_id) {
    return push(store.value(param_id), recording_, nullptr, "param", param_id);
  }

  const Tensor<Scalar>& value(Var v) const { return nodes_[idx(v)].value; }

  /// Gradient of the last backward() target w.r.t. v. Zero tensor if v was
  /// never reached.
  Tensor<Scalar> grad(Var v) const {
    const Node& n = nodes_[idx(v)];
    if (n.grad.empty()) return Tensor<Scalar>(n.value.shape);
    return Tensor<Scalar>(n.value.shape, n.grad);
  }

  /// Reverse sweep from a scalar loss. Parameters keep their values; gradients
  /// for parameter leaves are returned in the map.
  GradientMap<Scalar> backward(Var loss) {
    if (!recording_) throw NumericError("backward: tape is not recording");
    Node& ln = nodes_[idx(loss)];
    if (ln.value.numel() != 1) throw NumericError("backward: loss must be scalar");
    for (auto& n : nodes_) {
      n.grad.assign(n.value.numel(), Scalar(0));
    }
    ln.grad[0] = Scalar(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, i);
    }
    GradientMap<Scalar> map;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.param_id >= 0) {
        auto& slot = map.slot(n.param_id, n.value.shape);
        for (std::size_t k = 0; k < n.grad.size(); ++k) slot.data[k] += n.grad[k];
      }
    }
    return map;
  }

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // --- used by op implementations ---

  using BackwardFn = std::function<void(Tape&, int self)>;

  Var push(Tensor<Scalar> value, bool needs_grad, BackwardFn fn, const char* op_name,
           int param_id = -1) {
    check_finite(value, op_name);
    Node n;
    n.value = std::move(value);
    n.param_id = param_id;
    if (recording_) {
      n.backward = std::move(fn);
    }
    (void)needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Scalar>& grad_buf(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor<Scalar>& value_at(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

 private:
  struct Node {
    Tensor<Scalar> value;
    std::vector<Scalar> grad;
    BackwardFn backward;
    int param_id{-1};
  };

  static std::size_t idx(Var v) {
    if (!v.valid()) throw NumericError("tape: invalid var");
    return static_cast<std::size_t>(v.id);
  }

  // Cheap full-pass check: a non-finite sum is investigated element-wise so a
  // finite overflow of the sum alone does not abort.
  static void check_finite(const Tensor<Scalar>& t, const char* op_name) {
    Scalar acc(0);
    for (const Scalar& x : t.data) acc += x;
    if (std::isfinite(static_cast<double>(acc))) return;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      if (!std::isfinite(static_cast<double>(t.data[i]))) {
        throw NumericError(std::string("non-finite value in op '") + op_name +
                           "' at element " + std::to_string(i));
      }
    }
  }

  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace flowplan::ad

#endif  // FLOWPLAN_AD_TAPE_HPP
