#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "byolim/tensor.hpp"

namespace byolim {

/// A named model tensor. Copies receive a fresh identity, so a copied network
/// (e.g. a momentum target) never aliases the gradients of its source.
template <class T>
class Parameter {
 public:
  Parameter() : id_(next_id()) {}
  Parameter(std::string name, BasicTensor<T> v, bool is_trainable = true)
      : value(std::move(v)), trainable(is_trainable), id_(next_id()), name_(std::move(name)) {}

  Parameter(const Parameter& other)
      : value(other.value), trainable(other.trainable), id_(next_id()), name_(other.name_) {}
  Parameter& operator=(const Parameter& other) {
    value = other.value;
    trainable = other.trainable;
    name_ = other.name_;
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  std::uint64_t id() const noexcept { return id_; }
  const std::string& name() const noexcept { return name_; }
  void rename(std::string name) { name_ = std::move(name); }

  BasicTensor<T> value;
  bool trainable = true;

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t id_;
  std::string name_;
};

/// Gradients keyed by Parameter::id().
template <class T>
using GradMap = std::unordered_map<std::uint64_t, BasicTensor<T>>;

template <class T>
class Tape;

/// Handle to a value recorded on a tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t index) : tape_(tape), index_(index) {}

  const BasicTensor<T>& value() const { return tape_->value(index_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(index_); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Define-by-run record of differentiable operations. Nodes are appended in
/// evaluation order, so the node list is already topologically sorted.
/// backward() consumes the tape.
template <class T>
class Tape {
 public:
  class GradSink {
   public:
    GradSink(Tape& tape, const std::vector<std::size_t>& inputs) : tape_(tape), inputs_(inputs) {}

    bool wants(std::size_t k) const { return tape_.nodes_[inputs_.at(k)].requires_grad; }

    void add(std::size_t k, BasicTensor<T> grad) {
      if (wants(k)) tape_.accumulate(inputs_[k], std::move(grad));
    }

   private:
    Tape& tape_;
    const std::vector<std::size_t>& inputs_;
  };

  using BackwardFn = std::function<void(const BasicTensor<T>& grad_out, GradSink& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.value = &*n.owned;
    return {this, nodes_.size() - 1};
  }

  /// Leaf bound to a parameter. Receives gradients only if trainable.
  Var<T> parameter(const Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.value = &p.value;
    n.param = &p;
    n.requires_grad = p.trainable;
    return {this, nodes_.size() - 1};
  }

  /// Leaf bound to a parameter's value but excluded from differentiation.
  Var<T> detached(const Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.value = &p.value;
    return {this, nodes_.size() - 1};
  }

  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var<T>& v : inputs) needs = needs || requires_grad(v.index());
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.value = &*n.owned;
    n.requires_grad = needs;
    if (needs) {
      for (const Var<T>& v : inputs) n.inputs.push_back(v.index());
      n.backward = std::move(fn);
    }
    return {this, nodes_.size() - 1};
  }

  const BasicTensor<T>& value(std::size_t index) const { return *nodes_.at(index).value; }
  bool requires_grad(std::size_t index) const { return nodes_.at(index).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a rank-0 loss. Returns gradients for every trainable
  /// parameter reachable from the loss, then clears the tape.
  GradMap<T> backward(Var<T> loss) {
    if (&loss.tape() != this) throw Error(ErrorCode::shape_mismatch, "loss recorded on another tape");
    if (loss.value().rank() != 0) {
      throw Error(ErrorCode::not_scalar, "loss has shape " + shape_string(loss.shape()));
    }
    GradMap<T> grads;
    if (nodes_[loss.index()].requires_grad) {
      nodes_[loss.index()].grad = BasicTensor<T>::scalar(T(1));
      for (std::size_t i = loss.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.grad) continue;
        if (n.backward) {
          GradSink sink(*this, n.inputs);
          n.backward(*n.grad, sink);
        } else if (n.param != nullptr && n.param->trainable) {
          auto [it, inserted] = grads.try_emplace(n.param->id(), std::move(*n.grad));
          if (!inserted) add_into(it->second, *n.grad);
        }
        n.grad.reset();
        n.backward = nullptr;
      }
    }
    clear();
    return grads;
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::optional<BasicTensor<T>> owned;
    const BasicTensor<T>* value = nullptr;
    const Parameter<T>* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<BasicTensor<T>> grad;
    bool requires_grad = false;
  };

  static void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
    if (dst.shape() != src.shape()) {
      throw Error(ErrorCode::shape_mismatch, "gradient " + shape_string(src.shape()) +
                                                 " vs " + shape_string(dst.shape()));
    }
    T* d = dst.raw();
    const T* s = src.raw();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
  }

  void accumulate(std::size_t index, BasicTensor<T> grad) {
    Node& n = nodes_[index];
    if (grad.shape() != n.value->shape()) {
      throw Error(ErrorCode::shape_mismatch, "gradient " + shape_string(grad.shape()) +
                                                 " for value " + shape_string(n.value->shape()));
    }
    if (!n.grad) {
      n.grad = std::move(grad);
    } else {
      add_into(*n.grad, grad);
    }
  }

  std::deque<Node> nodes_;
};

template <class T>
const BasicTensor<T>* find_grad(const GradMap<T>& grads, const Parameter<T>& p) {
  auto it = grads.find(p.id());
  return it == grads.end() ? nullptr : &it->second;
}

}  // namespace byolim
