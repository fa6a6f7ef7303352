#ifndef AIRNET_TAPE_HPP
#define AIRNET_TAPE_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include "airnet/tensor.hpp"

namespace airnet::ad {

struct Ref {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Recorded computation graph for reverse-mode differentiation. Nodes are
/// appended in evaluation order, so the reverse sweep visits each exactly
/// once. Gradients are allocated lazily; leaves created with constant() are
/// never differentiated into.
template <class T>
class TapeT {
public:
    Ref constant(TensorT<T> v) { return push(std::move(v), false, nullptr); }

    Ref param(TensorT<T> v) { return push(std::move(v), true, nullptr); }

    Ref node(TensorT<T> value, bool needs_grad, std::function<void(TapeT&)> back) {
        return push(std::move(value), needs_grad, std::move(back));
    }

    const TensorT<T>& value(Ref r) const { return at(r).value; }
    TensorT<T>& value_mut(Ref r) { return at(r).value; }

    bool needs_grad(Ref r) const { return at(r).needs_grad; }

    /// Gradient of the last backward() target w.r.t. r. Empty tensor if r
    /// was not reached.
    const TensorT<T>& grad(Ref r) const { return at(r).grad; }

    /// Accumulation buffer used by op backward closures; allocates zeros of
    /// the value's shape on first touch.
    TensorT<T>& grad_buffer(Ref r) {
        Node& n = at(r);
        if (n.grad.size() == 0) n.grad = TensorT<T>(n.value.shape());
        return n.grad;
    }

    bool grad_allocated(Ref r) const { return at(r).grad.size() != 0; }

    /// Reverse sweep from a scalar loss. Repeated calls recompute from
    /// scratch (gradients are overwritten, not accumulated across calls).
    void backward(Ref loss) {
        if (nodes_.empty()) throw std::runtime_error("backward: graph already consumed");
        Node& l = at(loss);
        if (!l.value.is_scalar()) throw std::runtime_error("backward: loss must be a scalar");
        for (Node& n : nodes_) n.grad = TensorT<T>();
        l.grad = TensorT<T>(l.value.shape());
        l.grad[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && n.grad.size() != 0) n.back(*this);
        }
    }

    /// Drops all nodes; further backward() calls fail.
    void consume() { nodes_.clear(); }

    std::size_t num_nodes() const { return nodes_.size(); }

    /// Total elements held in node values (activation footprint).
    std::size_t stored_elements() const {
        std::size_t n = 0;
        for (const Node& nd : nodes_) n += nd.value.size();
        return n;
    }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        bool needs_grad = false;
        std::function<void(TapeT&)> back;
    };

    Ref push(TensorT<T> v, bool needs_grad, std::function<void(TapeT&)> back) {
        nodes_.push_back(Node{std::move(v), TensorT<T>(), needs_grad, std::move(back)});
        return Ref{static_cast<int>(nodes_.size()) - 1};
    }

    Node& at(Ref r) {
        if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
            throw std::out_of_range("tape: bad node reference");
        return nodes_[static_cast<std::size_t>(r.id)];
    }
    const Node& at(Ref r) const {
        if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
            throw std::out_of_range("tape: bad node reference");
        return nodes_[static_cast<std::size_t>(r.id)];
    }

    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

} // namespace airnet::ad

#endif
