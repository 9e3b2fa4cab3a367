#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sigscat/errors.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// What backward() does with gradients already stored on bound tensors.
enum class GradMode { reset, accumulate };

/// Linear record of executed operations for reverse-mode differentiation.
///
/// Nodes are appended after their inputs, so walking the record backwards
/// from the loss is a reverse topological order and touches every node once.
/// A tape is single-threaded; tensors bound with parameter() are read
/// through a pointer and must outlive the tape.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const T> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Leaf that is never differentiated.
  Var constant(Tensor<T> value) { return push("constant", std::move(value), false, {}); }

  /// Leaf whose gradient lives on the tape only (read it with grad()).
  Var variable(Tensor<T> value) { return push("variable", std::move(value), true, {}); }

  /// Leaf bound to an external tensor; backward() writes its gradient back.
  /// Binding the same tensor twice returns the same node.
  Var parameter(Tensor<T>& tensor) {
    auto v = bind(tensor);
    nodes_[v.id].writable = &tensor;
    return v;
  }
  /// Read-only binding: gradient available through grad() but never written.
  Var parameter(const Tensor<T>& tensor) { return bind(tensor); }

  /// Appends an op result. The node requires grad iff some input does;
  /// the backward function is dropped otherwise.
  Var record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs,
             BackwardFn fn) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }
  Var record(const char* op, Tensor<T> value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || requires_grad(in);
    if (!value.all_finite()) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
    return push(op, std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = node(v);
    return n.external ? *n.external : *n.owned;
  }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const std::string& op_name(Var v) const { return node(v).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of the last backward() w.r.t. v; zeros when v was unreachable.
  std::vector<T> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad) return *n.grad;
    return std::vector<T>(value(v).size(), T{});
  }

  /// Mutable gradient accumulator used by backward functions. Lazily zeroed.
  std::span<T> grad_buffer(Var v) {
    Node& n = node(v);
    if (!n.grad) n.grad.emplace(value(v).size(), T{});
    return *n.grad;
  }

  /// Populates gradients of `loss` w.r.t. every node that requires grad.
  /// Tape-local gradients are always recomputed from scratch; `mode`
  /// selects whether bound parameter tensors are overwritten or summed into.
  void backward(Var loss, GradMode mode = GradMode::reset) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       to_string(value(loss).shape()));
    }
    for (auto& n : nodes_) n.grad.reset();
    if (requires_grad(loss)) grad_buffer(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad || !n.backward) continue;
      // Callbacks only write to input nodes, which precede n on the tape.
      n.backward(*this, std::span<const T>(*n.grad));
    }
    for (auto& n : nodes_) {
      if (!n.grad) continue;
      for (T g : *n.grad) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient at " + n.op + " node");
        }
      }
    }
    for (auto& n : nodes_) {
      if (!n.writable) continue;
      Tensor<T>& t = *n.writable;
      if (mode == GradMode::reset || !t.has_grad()) t.zero_grad();
      if (!n.grad) continue;
      auto dst = t.grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (*n.grad)[k];
    }
  }

 private:
  struct Node {
    std::string op;
    std::optional<Tensor<T>> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T>* writable = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<std::vector<T>> grad;
  };

  Var bind(const Tensor<T>& tensor) {
    if (auto it = bound_.find(&tensor); it != bound_.end()) return it->second;
    Node n;
    n.op = "parameter";
    n.external = &tensor;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
    bound_.emplace(&tensor, v);
    return v;
  }

  Var push(const char* op, Tensor<T> value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.op = op;
    n.owned.emplace(std::move(value));
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw Error("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw Error("variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, Var> bound_;
};

}  // namespace sigscat
