#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hit/tensor.hpp"

namespace hit {

enum class Init {
    zeros,
    ones,
    xavier_uniform,  // U(+-sqrt(6/(fan_in+fan_out))), fans from the 2-d shape
    normal_002,      // N(0, 0.02), embedding tables
};

// Named trainable tensors. Backed by std::map so every walk over the model's
// parameters is in lexicographic name order, which pins down initialization
// and optimizer update order.
template <class S>
class ParamMapT {
  public:
    struct Entry {
        TensorPtrT<S> tensor;
        Init init;
        int64_t fan_in = 0, fan_out = 0;  // only meaningful for xavier_uniform
    };

    TensorPtrT<S> add(const std::string& name, Shape shape, Init init, int64_t fan_in = 0, int64_t fan_out = 0) {
        if (entries_.count(name)) throw invariant_error("parameter name registered twice: " + name);
        auto t = TensorT<S>::create(std::move(shape), /*requires_grad=*/true);
        if (init == Init::xavier_uniform && (fan_in <= 0 || fan_out <= 0)) {
            if (t->ndim() != 2) throw invariant_error("xavier init needs explicit fans for non-2d param " + name);
            fan_in = t->dim(0);
            fan_out = t->dim(1);
        }
        entries_[name] = Entry{t, init, fan_in, fan_out};
        return t;
    }

    void initialize(Rng& rng) {
        for (auto& [name, e] : entries_) {
            switch (e.init) {
                case Init::zeros:
                    std::fill(e.tensor->data.begin(), e.tensor->data.end(), S(0));
                    break;
                case Init::ones:
                    std::fill(e.tensor->data.begin(), e.tensor->data.end(), S(1));
                    break;
                case Init::xavier_uniform: {
                    const S bound = static_cast<S>(std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out)));
                    fill_uniform(*e.tensor, rng, -bound, bound);
                    break;
                }
                case Init::normal_002:
                    fill_normal(*e.tensor, rng, 0.0, 0.02);
                    break;
            }
        }
    }

    TensorPtrT<S> at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw invariant_error("unknown parameter: " + name);
        return it->second.tensor;
    }

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }

    void zero_grads() {
        for (auto& [name, e] : entries_) e.tensor->zero_grad();
    }

    // Allocate zero gradients for parameters the backward pass never touched
    // (e.g. encoders skipped by an ablation flag).
    void ensure_grads() {
        for (auto& [name, e] : entries_) e.tensor->ensure_grad();
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, e] : entries_) n += e.tensor->numel();
        return n;
    }

    size_t size() const { return entries_.size(); }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

  private:
    std::map<std::string, Entry> entries_;
};

using ParamMap = ParamMapT<float>;

}  // namespace hit
