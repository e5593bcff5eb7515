#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kbcx/autodiff/array.hpp"

namespace kbcx {

template <typename T>
class Tape;

/// Handle to a node recorded on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Array<T>& value() const { return tape->value(id); }
    const Shape& shape() const { return tape->value(id).shape; }
};

/// Records primitive applications in evaluation order. Node ids are
/// assigned increasingly, so every node's inputs precede it and a single
/// reverse sweep visits each node exactly once.
template <typename T>
class Tape {
   public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var<T> constant(Array<T> value) { return push(std::move(value), nullptr, false, {}); }

    /// Owned leaf that receives a gradient.
    Var<T> leaf(Array<T> value) { return push(std::move(value), nullptr, grad_enabled_, {}); }

    /// Leaf that refers to an externally owned array; it must outlive the tape.
    Var<T> parameter(const Array<T>& value) { return push(Array<T>{}, &value, grad_enabled_, {}); }

    /// Records a primitive output. `backward` reads this node's gradient and
    /// accumulates into the inputs.
    Var<T> record(Array<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
        bool needs = false;
        if (grad_enabled_) {
            for (auto in : inputs) needs = needs || nodes_[in].requires_grad;
        }
        Var<T> v = push(std::move(value), nullptr, needs, std::move(inputs));
        if (needs) nodes_[v.id].backward = std::move(backward);
        return v;
    }

    /// Records a two-output primitive (real and imaginary part). The backward
    /// function is attached to the first node and runs when either output
    /// carries a gradient; it receives the first node's id.
    std::pair<Var<T>, Var<T>> record_pair(Array<T> first, Array<T> second, std::vector<std::size_t> inputs,
                                          BackwardFn backward) {
        bool needs = false;
        if (grad_enabled_) {
            for (auto in : inputs) needs = needs || nodes_[in].requires_grad;
        }
        Var<T> a = push(std::move(first), nullptr, needs, inputs);
        Var<T> b = push(std::move(second), nullptr, needs, {a.id});
        if (needs) {
            nodes_[a.id].backward = std::move(backward);
            nodes_[a.id].paired = true;
        }
        return {a, b};
    }

    const Array<T>& value(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer for a node, zero-filled on first access.
    Array<T>& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.shape != value(id).shape || n.grad.data.size() != value(id).size()) {
            n.grad = Array<T>(value(id).shape, T{0});
        }
        return n.grad;
    }

    bool has_grad(std::size_t id) const { return !nodes_[id].grad.data.empty(); }

    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar node.
    void backward(Var<T> loss) {
        if (value(loss.id).size() != 1) {
            fail(ErrorCode::Shape, "backward requires a scalar loss, got shape " + to_string(value(loss.id).shape));
        }
        grad(loss.id)[0] += T{1};
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward) continue;
            if (has_grad(i) || (n.paired && has_grad(i + 1))) n.backward(*this, i);
        }
    }

   private:
    struct Node {
        Array<T> value;
        const Array<T>* external = nullptr;
        Array<T> grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool paired = false;
    };

    Var<T> push(Array<T> value, const Array<T>* external, bool requires_grad, std::vector<std::size_t> inputs) {
        Node n;
        n.value = std::move(value);
        n.external = external;
        n.requires_grad = requires_grad;
        n.inputs = std::move(inputs);
        nodes_.push_back(std::move(n));
        return Var<T>{this, nodes_.size() - 1};
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

}  // namespace kbcx
