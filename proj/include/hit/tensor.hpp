#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "hit/errors.hpp"
#include "hit/rng.hpp"

namespace hit {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << ']';
    return os.str();
}

template <class S>
class TensorT;
template <class S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

// Thread-local switch: when false, ops do not record parents/backward
// closures, so forward-only paths (eval, benchmarks) build no graph.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
};

// Per-op output finiteness checks. Disabled inside benchmark timed regions;
// the benchmark re-checks its outputs after the timer stops.
inline bool& finite_checks_flag() {
    thread_local bool enabled = true;
    return enabled;
}

// Dense row-major tensor and reverse-mode graph node in one. A node owns its
// value; `parents` plus `backward_fn` describe how to push its gradient one
// step back. Nodes created while grad mode is off carry no graph state.
template <class S>
class TensorT {
  public:
    Shape shape;
    std::vector<S> data;
    bool requires_grad = false;
    std::vector<S> grad;  // empty until backward touches this node

    std::vector<TensorPtrT<S>> parents;
    std::function<void()> backward_fn;  // captures `this` raw; parents by shared_ptr

    static TensorPtrT<S> create(Shape shape, bool requires_grad = false) {
        auto t = std::make_shared<TensorT<S>>();
        t->shape = std::move(shape);
        for (int64_t d : t->shape) {
            if (d < 0) throw dimension_error("tensor dims must be non-negative, got " + shape_str(t->shape));
        }
        t->data.assign(static_cast<size_t>(shape_numel(t->shape)), S(0));
        t->requires_grad = requires_grad;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    int64_t dim(int i) const {
        const int n = ndim();
        if (i < 0) i += n;
        if (i < 0 || i >= n) throw dimension_error("dim index out of range for " + shape_str(shape));
        return shape[static_cast<size_t>(i)];
    }

    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
        return grad;
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
    }

    void check_finite(const char* op) const {
        for (S v : data) {
            if (!std::isfinite(static_cast<double>(v)))
                throw numeric_error(std::string(op) + " produced a non-finite value");
        }
    }
};

template <class S>
TensorPtrT<S> make_tensor(Shape shape, std::vector<S> values, bool requires_grad = false) {
    auto t = TensorT<S>::create(std::move(shape), requires_grad);
    if (static_cast<int64_t>(values.size()) != t->numel())
        throw dimension_error("make_tensor: " + std::to_string(values.size()) + " values for shape " +
                              shape_str(t->shape));
    t->data = std::move(values);
    return t;
}

template <class S>
TensorPtrT<S> make_zeros(Shape shape, bool requires_grad = false) {
    return TensorT<S>::create(std::move(shape), requires_grad);
}

template <class S>
TensorPtrT<S> make_full(Shape shape, S value, bool requires_grad = false) {
    auto t = TensorT<S>::create(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

template <class S>
void fill_uniform(TensorT<S>& t, Rng& rng, S lo, S hi) {
    for (S& v : t.data) v = static_cast<S>(lo + (hi - lo) * static_cast<S>(rng.uniform_d()));
}

template <class S>
void fill_normal(TensorT<S>& t, Rng& rng, double mu, double sigma) {
    for (S& v : t.data) v = static_cast<S>(rng.normal(mu, sigma));
}

// Builds a fresh node whose requires_grad is inherited from the parents.
// Parents are only retained when a backward pass could need them.
template <class S>
TensorPtrT<S> make_node(Shape shape, std::initializer_list<TensorPtrT<S>> parents) {
    auto out = TensorT<S>::create(std::move(shape));
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                out->requires_grad = true;
                break;
            }
        }
        if (out->requires_grad) {
            for (const auto& p : parents)
                if (p) out->parents.push_back(p);
        }
    }
    return out;
}

// Reverse-mode sweep from a scalar root. Nodes are visited in reverse
// topological order, so every node's gradient is complete before its
// backward_fn fires.
template <class S>
void backward(const TensorPtrT<S>& root) {
    if (!root) throw invariant_error("backward: null root");
    if (root->numel() != 1) throw invariant_error("backward: root must be a scalar, got " + shape_str(root->shape));

    std::vector<TensorT<S>*> order;
    std::unordered_set<TensorT<S>*> seen;
    struct Frame {
        TensorT<S>* node;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorT<S>* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace hit
