#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hit/tensor.hpp"

namespace hit {

// ---------------------------------------------------------------------------
// broadcast machinery
// ---------------------------------------------------------------------------

struct BroadcastPlan {
    Shape out_shape;
    std::vector<int64_t> a_stride, b_stride;  // element strides per out dim, 0 where broadcast
    int64_t n = 1;
};

inline std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d) st[d] = st[d + 1] * s[d + 1];
    return st;
}

inline BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    const size_t r = std::max(a.size(), b.size());
    Shape pa(r, 1), pb(r, 1);
    std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
    BroadcastPlan plan;
    plan.out_shape.resize(r);
    for (size_t d = 0; d < r; ++d) {
        if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1)
            throw dimension_error(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                  " are not broadcastable");
        plan.out_shape[d] = std::max(pa[d], pb[d]);
    }
    plan.n = shape_numel(plan.out_shape);
    auto sa = row_major_strides(pa);
    auto sb = row_major_strides(pb);
    plan.a_stride.resize(r);
    plan.b_stride.resize(r);
    for (size_t d = 0; d < r; ++d) {
        plan.a_stride[d] = (pa[d] == 1 && plan.out_shape[d] > 1) ? 0 : sa[d];
        plan.b_stride[d] = (pb[d] == 1 && plan.out_shape[d] > 1) ? 0 : sb[d];
    }
    return plan;
}

// Odometer walk over the broadcast output. fn(out_index, a_offset, b_offset).
template <class Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
    const int r = static_cast<int>(p.out_shape.size());
    std::vector<int64_t> coord(static_cast<size_t>(r), 0);
    int64_t ao = 0, bo = 0;
    for (int64_t i = 0; i < p.n; ++i) {
        fn(i, ao, bo);
        for (int d = r - 1; d >= 0; --d) {
            ++coord[static_cast<size_t>(d)];
            ao += p.a_stride[static_cast<size_t>(d)];
            bo += p.b_stride[static_cast<size_t>(d)];
            if (coord[static_cast<size_t>(d)] < p.out_shape[static_cast<size_t>(d)]) break;
            ao -= p.a_stride[static_cast<size_t>(d)] * p.out_shape[static_cast<size_t>(d)];
            bo -= p.b_stride[static_cast<size_t>(d)] * p.out_shape[static_cast<size_t>(d)];
            coord[static_cast<size_t>(d)] = 0;
        }
    }
}

template <class S>
void finalize_op(const TensorPtrT<S>& t, const char* op) {
    if (finite_checks_flag()) t->check_finite(op);
}

// ---------------------------------------------------------------------------
// elementwise and broadcast binary ops
// ---------------------------------------------------------------------------

template <class S>
TensorPtrT<S> add(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    if (a->shape == b->shape) {
        auto out = make_node<S>(a->shape, {a, b});
        const int64_t n = out->numel();
        for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
        if (out->requires_grad) {
            auto* o = out.get();
            out->backward_fn = [o, a, b]() {
                const int64_t n = o->numel();
                if (a->requires_grad) {
                    auto& ga = a->ensure_grad();
                    for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i];
                }
                if (b->requires_grad) {
                    auto& gb = b->ensure_grad();
                    for (int64_t i = 0; i < n; ++i) gb[i] += o->grad[i];
                }
            };
        }
        finalize_op(out, "add");
        return out;
    }
    BroadcastPlan plan = make_broadcast_plan(a->shape, b->shape, "add");
    auto out = make_node<S>(plan.out_shape, {a, b});
    for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { out->data[i] = a->data[ao] + b->data[bo]; });
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a, b, plan]() {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) {
                if (a->requires_grad) a->grad[ao] += o->grad[i];
                if (b->requires_grad) b->grad[bo] += o->grad[i];
            });
        };
    }
    finalize_op(out, "add");
    return out;
}

template <class S>
TensorPtrT<S> mul(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    if (a->shape == b->shape) {
        auto out = make_node<S>(a->shape, {a, b});
        const int64_t n = out->numel();
        for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
        if (out->requires_grad) {
            auto* o = out.get();
            out->backward_fn = [o, a, b]() {
                const int64_t n = o->numel();
                if (a->requires_grad) {
                    auto& ga = a->ensure_grad();
                    for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i] * b->data[i];
                }
                if (b->requires_grad) {
                    auto& gb = b->ensure_grad();
                    for (int64_t i = 0; i < n; ++i) gb[i] += o->grad[i] * a->data[i];
                }
            };
        }
        finalize_op(out, "mul");
        return out;
    }
    BroadcastPlan plan = make_broadcast_plan(a->shape, b->shape, "mul");
    auto out = make_node<S>(plan.out_shape, {a, b});
    for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { out->data[i] = a->data[ao] * b->data[bo]; });
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a, b, plan]() {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) {
                if (a->requires_grad) a->grad[ao] += o->grad[i] * b->data[bo];
                if (b->requires_grad) b->grad[bo] += o->grad[i] * a->data[ao];
            });
        };
    }
    finalize_op(out, "mul");
    return out;
}

template <class S>
TensorPtrT<S> scale(const TensorPtrT<S>& a, S c) {
    auto out = make_node<S>(a->shape, {a});
    const int64_t n = out->numel();
    for (int64_t i = 0; i < n; ++i) out->data[i] = c * a->data[i];
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a, c]() {
            auto& ga = a->ensure_grad();
            const int64_t n = o->numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += c * o->grad[i];
        };
    }
    finalize_op(out, "scale");
    return out;
}

template <class S>
TensorPtrT<S> relu(const TensorPtrT<S>& a) {
    auto out = make_node<S>(a->shape, {a});
    const int64_t n = out->numel();
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] > S(0) ? a->data[i] : S(0);
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a]() {
            auto& ga = a->ensure_grad();
            const int64_t n = o->numel();
            for (int64_t i = 0; i < n; ++i)
                if (a->data[i] > S(0)) ga[i] += o->grad[i];
        };
    }
    finalize_op(out, "relu");
    return out;
}

template <class S>
TensorPtrT<S> tanh_op(const TensorPtrT<S>& a) {
    auto out = make_node<S>(a->shape, {a});
    const int64_t n = out->numel();
    for (int64_t i = 0; i < n; ++i) out->data[i] = std::tanh(a->data[i]);
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a]() {
            auto& ga = a->ensure_grad();
            const int64_t n = o->numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i] * (S(1) - o->data[i] * o->data[i]);
        };
    }
    finalize_op(out, "tanh");
    return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <class S>
inline S dot_k(const S* a, const S* b, int64_t k) {
    S s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= k; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    S tail = 0;
    for (; i < k; ++i) tail += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

// C[m,n] (+)= alpha * op(A)[m,k] * op(B)[k,n]; all buffers row-major.
// Operands are packed so every dot product runs over contiguous memory.
template <class S>
void gemm(S* c, const S* a, const S* b, int64_t m, int64_t n, int64_t k, bool trans_a, bool trans_b, S alpha,
          bool accumulate) {
    static thread_local std::vector<S> pack_a, pack_b;
    const S* arows = a;
    if (trans_a) {  // A physical [k, m]; pack op(A) = A^T into [m, k]
        pack_a.resize(static_cast<size_t>(m * k));
        for (int64_t p = 0; p < k; ++p)
            for (int64_t i = 0; i < m; ++i) pack_a[static_cast<size_t>(i * k + p)] = a[p * m + i];
        arows = pack_a.data();
    }
    const S* brows = b;  // rows of op(B)^T, i.e. columns of op(B)
    if (!trans_b) {      // B physical [k, n]; pack B^T into [n, k]
        pack_b.resize(static_cast<size_t>(n * k));
        for (int64_t p = 0; p < k; ++p)
            for (int64_t j = 0; j < n; ++j) pack_b[static_cast<size_t>(j * k + p)] = b[p * n + j];
        brows = pack_b.data();
    }
    for (int64_t i = 0; i < m; ++i) {
        const S* ar = arows + i * k;
        S* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const S v = alpha * dot_k(ar, brows + j * k, k);
            if (accumulate)
                crow[j] += v;
            else
                crow[j] = v;
        }
    }
}

// Batched matrix product with broadcast over leading dims:
//   out = alpha * op(a) . op(b),  op(x) = x or x^T on the last two dims.
template <class S>
TensorPtrT<S> matmul(const TensorPtrT<S>& a, const TensorPtrT<S>& b, bool trans_a = false, bool trans_b = false,
                     S alpha = S(1)) {
    if (a->ndim() < 2 || b->ndim() < 2)
        throw dimension_error("matmul: operands must have >= 2 dims, got " + shape_str(a->shape) + " and " +
                              shape_str(b->shape));
    const int64_t m = trans_a ? a->dim(-1) : a->dim(-2);
    const int64_t ka = trans_a ? a->dim(-2) : a->dim(-1);
    const int64_t kb = trans_b ? b->dim(-1) : b->dim(-2);
    const int64_t n = trans_b ? b->dim(-2) : b->dim(-1);
    if (ka != kb)
        throw dimension_error("matmul: inner dimensions differ for shapes " + shape_str(a->shape) + " and " +
                              shape_str(b->shape));
    const int64_t k = ka;

    Shape a_batch(a->shape.begin(), a->shape.end() - 2);
    Shape b_batch(b->shape.begin(), b->shape.end() - 2);
    BroadcastPlan bp = make_broadcast_plan(a_batch, b_batch, "matmul");
    Shape out_shape = bp.out_shape;
    out_shape.push_back(m);
    out_shape.push_back(n);

    auto out = make_node<S>(out_shape, {a, b});
    const int64_t a_mat = a->dim(-2) * a->dim(-1);
    const int64_t b_mat = b->dim(-2) * b->dim(-1);
    const int64_t o_mat = m * n;
    for_each_broadcast(bp, [&](int64_t i, int64_t ao, int64_t bo) {
        gemm(out->data.data() + i * o_mat, a->data.data() + ao * a_mat, b->data.data() + bo * b_mat, m, n, k, trans_a,
             trans_b, alpha, false);
    });
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, a, b, bp, m, n, k, a_mat, b_mat, o_mat, trans_a, trans_b, alpha]() {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for_each_broadcast(bp, [&](int64_t i, int64_t ao, int64_t bo) {
                const S* gc = o->grad.data() + i * o_mat;
                const S* pa = a->data.data() + ao * a_mat;
                const S* pb = b->data.data() + bo * b_mat;
                if (a->requires_grad) {
                    S* ga = a->grad.data() + ao * a_mat;
                    if (!trans_a)
                        gemm(ga, gc, pb, m, k, n, false, !trans_b, alpha, true);
                    else
                        gemm(ga, pb, gc, k, m, n, trans_b, true, alpha, true);
                }
                if (b->requires_grad) {
                    S* gb = b->grad.data() + bo * b_mat;
                    if (!trans_b)
                        gemm(gb, pa, gc, k, n, m, !trans_a, false, alpha, true);
                    else
                        gemm(gb, gc, pa, n, k, m, true, trans_a, alpha, true);
                }
            });
        };
    }
    finalize_op(out, "matmul");
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class S>
TensorPtrT<S> reshape(const TensorPtrT<S>& x, Shape to) {
    if (shape_numel(to) != x->numel())
        throw dimension_error("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(to));
    auto out = make_node<S>(std::move(to), {x});
    out->data = x->data;
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x]() {
            auto& gx = x->ensure_grad();
            const int64_t n = o->numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += o->grad[i];
        };
    }
    return out;
}

template <class S>
TensorPtrT<S> permute(const TensorPtrT<S>& x, std::vector<int> perm) {
    const int r = x->ndim();
    if (static_cast<int>(perm.size()) != r) throw dimension_error("permute: rank mismatch for " + shape_str(x->shape));
    std::vector<bool> used(static_cast<size_t>(r), false);
    Shape out_shape(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) {
        const int p = perm[static_cast<size_t>(d)];
        if (p < 0 || p >= r || used[static_cast<size_t>(p)]) throw dimension_error("permute: invalid permutation");
        used[static_cast<size_t>(p)] = true;
        out_shape[static_cast<size_t>(d)] = x->shape[static_cast<size_t>(p)];
    }
    auto in_strides = row_major_strides(x->shape);
    std::vector<int64_t> step(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) step[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(d)])];

    auto out = make_node<S>(out_shape, {x});
    const int64_t n = out->numel();
    std::vector<int64_t> coord(static_cast<size_t>(r), 0);
    int64_t in_off = 0;
    for (int64_t i = 0; i < n; ++i) {
        out->data[i] = x->data[in_off];
        for (int d = r - 1; d >= 0; --d) {
            ++coord[static_cast<size_t>(d)];
            in_off += step[static_cast<size_t>(d)];
            if (coord[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
            in_off -= step[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
            coord[static_cast<size_t>(d)] = 0;
        }
    }
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x, step, out_shape]() {
            auto& gx = x->ensure_grad();
            const int r = static_cast<int>(out_shape.size());
            const int64_t n = o->numel();
            std::vector<int64_t> coord(static_cast<size_t>(r), 0);
            int64_t in_off = 0;
            for (int64_t i = 0; i < n; ++i) {
                gx[in_off] += o->grad[i];
                for (int d = r - 1; d >= 0; --d) {
                    ++coord[static_cast<size_t>(d)];
                    in_off += step[static_cast<size_t>(d)];
                    if (coord[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
                    in_off -= step[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
                    coord[static_cast<size_t>(d)] = 0;
                }
            }
        };
    }
    return out;
}

template <class S>
TensorPtrT<S> broadcast_to(const TensorPtrT<S>& x, Shape to) {
    BroadcastPlan plan = make_broadcast_plan(x->shape, to, "broadcast_to");
    if (plan.out_shape != to)
        throw dimension_error("broadcast_to: " + shape_str(x->shape) + " does not broadcast to " + shape_str(to));
    auto out = make_node<S>(to, {x});
    for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t) { out->data[i] = x->data[ao]; });
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x, plan]() {
            auto& gx = x->ensure_grad();
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t) { gx[ao] += o->grad[i]; });
        };
    }
    return out;
}

namespace detail {
inline void split_at_dim(const Shape& s, int dim, int64_t& outer, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int d = 0; d < dim; ++d) outer *= s[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(dim) + 1; d < s.size(); ++d) inner *= s[d];
}
}  // namespace detail

// Narrows away one index along `dim` (the dim is removed from the shape).
template <class S>
TensorPtrT<S> select_index(const TensorPtrT<S>& x, int dim, int64_t idx) {
    const int r = x->ndim();
    if (dim < 0) dim += r;
    if (dim < 0 || dim >= r) throw dimension_error("select_index: bad dim for " + shape_str(x->shape));
    const int64_t D = x->shape[static_cast<size_t>(dim)];
    if (idx < 0 || idx >= D) throw dimension_error("select_index: index out of range for " + shape_str(x->shape));
    int64_t outer, inner;
    detail::split_at_dim(x->shape, dim, outer, inner);
    Shape out_shape;
    for (int d = 0; d < r; ++d)
        if (d != dim) out_shape.push_back(x->shape[static_cast<size_t>(d)]);

    auto out = make_node<S>(out_shape, {x});
    for (int64_t o = 0; o < outer; ++o) {
        const S* src = x->data.data() + (o * D + idx) * inner;
        std::copy(src, src + inner, out->data.data() + o * inner);
    }
    if (out->requires_grad) {
        auto* ot = out.get();
        out->backward_fn = [ot, x, outer, inner, D, idx]() {
            auto& gx = x->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                S* dst = gx.data() + (o * D + idx) * inner;
                const S* g = ot->grad.data() + o * inner;
                for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
            }
        };
    }
    return out;
}

// Copy of x with x[..., idx, ...] along `dim` replaced by v. v has x's shape
// with `dim` removed. Gradient w.r.t. x is zero on the replaced slice.
template <class S>
TensorPtrT<S> replace_index(const TensorPtrT<S>& x, int dim, int64_t idx, const TensorPtrT<S>& v) {
    const int r = x->ndim();
    if (dim < 0) dim += r;
    if (dim < 0 || dim >= r) throw dimension_error("replace_index: bad dim for " + shape_str(x->shape));
    const int64_t D = x->shape[static_cast<size_t>(dim)];
    if (idx < 0 || idx >= D) throw dimension_error("replace_index: index out of range for " + shape_str(x->shape));
    Shape slice_shape;
    for (int d = 0; d < r; ++d)
        if (d != dim) slice_shape.push_back(x->shape[static_cast<size_t>(d)]);
    if (v->shape != slice_shape)
        throw dimension_error("replace_index: value shape " + shape_str(v->shape) + " does not match slice " +
                              shape_str(slice_shape));
    int64_t outer, inner;
    detail::split_at_dim(x->shape, dim, outer, inner);

    auto out = make_node<S>(x->shape, {x, v});
    out->data = x->data;
    for (int64_t o = 0; o < outer; ++o) {
        const S* src = v->data.data() + o * inner;
        std::copy(src, src + inner, out->data.data() + (o * D + idx) * inner);
    }
    if (out->requires_grad) {
        auto* ot = out.get();
        out->backward_fn = [ot, x, v, outer, inner, D, idx]() {
            if (x->requires_grad) {
                auto& gx = x->ensure_grad();
                const int64_t n = ot->numel();
                for (int64_t i = 0; i < n; ++i) gx[i] += ot->grad[i];
                for (int64_t o = 0; o < outer; ++o) {
                    S* dst = gx.data() + (o * D + idx) * inner;
                    const S* g = ot->grad.data() + (o * D + idx) * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] -= g[i];
                }
            }
            if (v->requires_grad) {
                auto& gv = v->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const S* g = ot->grad.data() + (o * D + idx) * inner;
                    S* dst = gv.data() + o * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
                }
            }
        };
    }
    return out;
}

// Row gather from a [V, d] table; backward scatter-adds into the table rows.
template <class S>
TensorPtrT<S> embedding_lookup(const TensorPtrT<S>& table, std::vector<int64_t> ids, Shape id_shape,
                               const char* what = "embedding_lookup") {
    if (table->ndim() != 2) throw dimension_error("embedding_lookup: table must be 2-d, got " + shape_str(table->shape));
    if (shape_numel(id_shape) != static_cast<int64_t>(ids.size()))
        throw dimension_error("embedding_lookup: id count does not match id shape");
    const int64_t V = table->dim(0);
    const int64_t d = table->dim(1);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= V)
            throw data_error(std::string(what) + ": id " + std::to_string(ids[i]) + " out of range [0, " +
                             std::to_string(V) + ") at position " + std::to_string(i));
    }
    Shape out_shape = id_shape;
    out_shape.push_back(d);
    auto out = make_node<S>(out_shape, {table});
    for (size_t i = 0; i < ids.size(); ++i) {
        const S* src = table->data.data() + ids[i] * d;
        std::copy(src, src + d, out->data.data() + static_cast<int64_t>(i) * d);
    }
    if (out->requires_grad) {
        auto* o = out.get();
        auto ids_keep = std::make_shared<std::vector<int64_t>>(std::move(ids));
        out->backward_fn = [o, table, ids_keep, d]() {
            auto& gt = table->ensure_grad();
            for (size_t i = 0; i < ids_keep->size(); ++i) {
                S* dst = gt.data() + (*ids_keep)[i] * d;
                const S* g = o->grad.data() + static_cast<int64_t>(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization / activation rows
// ---------------------------------------------------------------------------

inline constexpr float kMaskedOut = -1e9f;  // additive mask value for invalid slots
inline constexpr float kMaskedThreshold = -1e8f;  // entries at or below this count as masked

// Softmax over the last dim with an additive mask broadcastable to the logit
// shape. Masked entries come out exactly 0; rows are stabilized by
// max-subtraction. A fully masked row is a domain error unless
// `allow_all_masked` is set, in which case the row comes out all-zero (used
// for attention rows whose query is itself padding).
template <class S>
TensorPtrT<S> masked_softmax_impl(const TensorPtrT<S>& logits, const TensorPtrT<S>& mask, bool allow_all_masked) {
    if (mask->requires_grad) throw invariant_error("masked_softmax: mask must not require grad");
    if (logits->ndim() < 1) throw dimension_error("masked_softmax: logits must have >= 1 dim");
    BroadcastPlan plan = make_broadcast_plan(logits->shape, mask->shape, "masked_softmax");
    if (plan.out_shape != logits->shape)
        throw dimension_error("masked_softmax: mask " + shape_str(mask->shape) + " does not broadcast to logits " +
                              shape_str(logits->shape));
    const int64_t L = logits->dim(-1);
    const size_t r = plan.out_shape.size();
    const int64_t mask_inner = plan.b_stride[r - 1];

    // Row plan over leading dims only.
    BroadcastPlan rows = plan;
    rows.out_shape.pop_back();
    rows.a_stride.pop_back();
    rows.b_stride.pop_back();
    rows.n = shape_numel(rows.out_shape);

    auto out = make_node<S>(logits->shape, {logits});
    for_each_broadcast(rows, [&](int64_t row, int64_t, int64_t mo) {
        const S* l = logits->data.data() + row * L;
        const S* mk = mask->data.data() + mo;
        S* y = out->data.data() + row * L;
        double mx = -std::numeric_limits<double>::infinity();
        bool any_valid = false;
        for (int64_t j = 0; j < L; ++j) {
            const S mv = mk[j * mask_inner];
            if (mv > S(kMaskedThreshold)) {
                any_valid = true;
                const double v = static_cast<double>(l[j]) + static_cast<double>(mv);
                if (v > mx) mx = v;
            }
        }
        if (!any_valid) {
            if (!allow_all_masked) throw domain_error("masked_softmax: fully masked row");
            for (int64_t j = 0; j < L; ++j) y[j] = S(0);
            return;
        }
        double sum = 0.0;
        for (int64_t j = 0; j < L; ++j) {
            const S mv = mk[j * mask_inner];
            if (mv > S(kMaskedThreshold)) {
                const double e = std::exp(static_cast<double>(l[j]) + static_cast<double>(mv) - mx);
                y[j] = static_cast<S>(e);
                sum += e;
            } else {
                y[j] = S(0);
            }
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < L; ++j) y[j] = static_cast<S>(static_cast<double>(y[j]) * inv);
    });
    if (out->requires_grad) {
        auto* o = out.get();
        const int64_t n_rows = rows.n;
        out->backward_fn = [o, logits, L, n_rows]() {
            auto& gl = logits->ensure_grad();
            for (int64_t row = 0; row < n_rows; ++row) {
                const S* y = o->data.data() + row * L;
                const S* g = o->grad.data() + row * L;
                double s = 0.0;
                for (int64_t j = 0; j < L; ++j) s += static_cast<double>(g[j]) * static_cast<double>(y[j]);
                S* dl = gl.data() + row * L;
                for (int64_t j = 0; j < L; ++j)
                    dl[j] += y[j] * (g[j] - static_cast<S>(s));
            }
        };
    }
    finalize_op(out, "masked_softmax");
    return out;
}

template <class S>
TensorPtrT<S> masked_softmax(const TensorPtrT<S>& logits, const TensorPtrT<S>& mask) {
    return masked_softmax_impl(logits, mask, false);
}

// Per-row standardization over the last dim followed by a learned affine.
template <class S>
TensorPtrT<S> layer_norm(const TensorPtrT<S>& x, const TensorPtrT<S>& gain, const TensorPtrT<S>& bias,
                         S eps = S(1e-5)) {
    const int64_t d = x->dim(-1);
    if (d < 1) throw dimension_error("layer_norm: empty feature dim in " + shape_str(x->shape));
    if (!(eps > S(0))) throw config_error("layer_norm: eps must be positive");
    if (gain->shape != Shape{d} || bias->shape != Shape{d})
        throw dimension_error("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
    const int64_t n_rows = x->numel() / d;

    auto out = make_node<S>(x->shape, {x, gain, bias});
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(2 * n_rows));  // mu, inv per row
    for (int64_t row = 0; row < n_rows; ++row) {
        const S* px = x->data.data() + row * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += static_cast<double>(px[j]);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = static_cast<double>(px[j]) - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        (*stats)[static_cast<size_t>(2 * row)] = mu;
        (*stats)[static_cast<size_t>(2 * row + 1)] = inv;
        S* py = out->data.data() + row * d;
        for (int64_t j = 0; j < d; ++j) {
            const S xh = static_cast<S>((static_cast<double>(px[j]) - mu) * inv);
            py[j] = gain->data[j] * xh + bias->data[j];
        }
    }
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x, gain, bias, stats, d, n_rows]() {
            const bool need_x = x->requires_grad;
            const bool need_g = gain->requires_grad;
            const bool need_b = bias->requires_grad;
            if (need_x) x->ensure_grad();
            if (need_g) gain->ensure_grad();
            if (need_b) bias->ensure_grad();
            std::vector<S> xhat(static_cast<size_t>(d));
            for (int64_t row = 0; row < n_rows; ++row) {
                const double mu = (*stats)[static_cast<size_t>(2 * row)];
                const double inv = (*stats)[static_cast<size_t>(2 * row + 1)];
                const S* px = x->data.data() + row * d;
                const S* g = o->grad.data() + row * d;
                double sum1 = 0.0, sum2 = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    xhat[static_cast<size_t>(j)] = static_cast<S>((static_cast<double>(px[j]) - mu) * inv);
                    const double dxh = static_cast<double>(g[j]) * static_cast<double>(gain->data[j]);
                    sum1 += dxh;
                    sum2 += dxh * static_cast<double>(xhat[static_cast<size_t>(j)]);
                }
                sum1 /= static_cast<double>(d);
                sum2 /= static_cast<double>(d);
                for (int64_t j = 0; j < d; ++j) {
                    const double dxh = static_cast<double>(g[j]) * static_cast<double>(gain->data[j]);
                    if (need_x)
                        x->grad[row * d + j] +=
                            static_cast<S>(inv * (dxh - sum1 - static_cast<double>(xhat[static_cast<size_t>(j)]) * sum2));
                    if (need_g) gain->grad[j] += g[j] * xhat[static_cast<size_t>(j)];
                    if (need_b) bias->grad[j] += g[j];
                }
            }
        };
    }
    finalize_op(out, "layer_norm");
    return out;
}

// Inverted dropout: zero with probability `rate` and scale survivors by
// 1/(1-rate) at training time; identity in eval mode.
template <class S>
TensorPtrT<S> dropout(const TensorPtrT<S>& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw config_error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    const float frate = static_cast<float>(rate);
    auto out = make_node<S>(x->shape, {x});
    auto mult = std::make_shared<std::vector<S>>(x->data.size());
    for (size_t i = 0; i < x->data.size(); ++i) {
        const S m = (rng.uniform() < frate) ? S(0) : keep_scale;
        (*mult)[i] = m;
        out->data[i] = x->data[i] * m;
    }
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x, mult]() {
            auto& gx = x->ensure_grad();
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += o->grad[i] * (*mult)[i];
        };
    }
    finalize_op(out, "dropout");
    return out;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

template <class S>
TensorPtrT<S> sum_all(const TensorPtrT<S>& x) {
    auto out = make_node<S>(Shape{1}, {x});
    double acc = 0.0;
    for (S v : x->data) acc += static_cast<double>(v);
    out->data[0] = static_cast<S>(acc);
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x]() {
            auto& gx = x->ensure_grad();
            for (S& g : gx) g += o->grad[0];
        };
    }
    finalize_op(out, "sum_all");
    return out;
}

template <class S>
TensorPtrT<S> mean_all(const TensorPtrT<S>& x) {
    if (x->numel() == 0) throw dimension_error("mean_all: empty tensor");
    auto out = make_node<S>(Shape{1}, {x});
    double acc = 0.0;
    for (S v : x->data) acc += static_cast<double>(v);
    const S invn = static_cast<S>(1.0 / static_cast<double>(x->numel()));
    out->data[0] = static_cast<S>(acc) * invn;
    if (out->requires_grad) {
        auto* o = out.get();
        out->backward_fn = [o, x, invn]() {
            auto& gx = x->ensure_grad();
            for (S& g : gx) g += o->grad[0] * invn;
        };
    }
    finalize_op(out, "mean_all");
    return out;
}

// Mean softmax cross-entropy over a [B, C] logit batch.
template <class S>
TensorPtrT<S> softmax_cross_entropy(const TensorPtrT<S>& logits, const std::vector<int32_t>& labels) {
    if (logits->ndim() != 2) throw dimension_error("softmax_cross_entropy: logits must be [B, C]");
    const int64_t B = logits->dim(0);
    const int64_t C = logits->dim(1);
    if (static_cast<int64_t>(labels.size()) != B)
        throw dimension_error("softmax_cross_entropy: batch size mismatch between logits and labels");
    for (int64_t i = 0; i < B; ++i)
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= C)
            throw data_error("softmax_cross_entropy: label " + std::to_string(labels[static_cast<size_t>(i)]) +
                             " out of range at row " + std::to_string(i));

    auto out = make_node<S>(Shape{1}, {logits});
    auto lse = std::make_shared<std::vector<double>>(static_cast<size_t>(B));
    double total = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        const S* row = logits->data.data() + i * C;
        double mx = static_cast<double>(row[0]);
        for (int64_t j = 1; j < C; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double s = 0.0;
        for (int64_t j = 0; j < C; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
        const double l = mx + std::log(s);
        (*lse)[static_cast<size_t>(i)] = l;
        total += l - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
    }
    out->data[0] = static_cast<S>(total / static_cast<double>(B));
    if (out->requires_grad) {
        auto* o = out.get();
        auto labels_keep = std::make_shared<std::vector<int32_t>>(labels);
        out->backward_fn = [o, logits, lse, labels_keep, B, C]() {
            auto& gl = logits->ensure_grad();
            const S g0 = o->grad[0];
            const S invb = static_cast<S>(1.0 / static_cast<double>(B));
            for (int64_t i = 0; i < B; ++i) {
                const S* row = logits->data.data() + i * C;
                S* grow = gl.data() + i * C;
                const double l = (*lse)[static_cast<size_t>(i)];
                for (int64_t j = 0; j < C; ++j) {
                    const S p = static_cast<S>(std::exp(static_cast<double>(row[j]) - l));
                    const S y = (j == (*labels_keep)[static_cast<size_t>(i)]) ? S(1) : S(0);
                    grow[j] += g0 * invb * (p - y);
                }
            }
        };
    }
    finalize_op(out, "softmax_cross_entropy");
    return out;
}

}  // namespace hit
