#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "s3net/tensor.hpp"

namespace s3net::ag {

// Reverse-mode tape. Nodes own their forward value; gradients are allocated
// lazily during backward(). Graph edges are shared_ptrs, so intermediate
// values stay alive exactly as long as something downstream references them.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // accumulates into parents' grads
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return leaf<T>(std::move(value), false);
}

template <typename T>
bool any_requires_grad(const std::vector<Var<T>>& vars) {
    for (const auto& v : vars)
        if (v->requires_grad) return true;
    return false;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = any_requires_grad(parents);
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

// Grad buffer of a parent, allocated (zero) on first touch.
template <typename T>
Tensor<T>& grad_buf(const Var<T>& v) {
    if (v->grad.numel() == 0) v->grad = Tensor<T>::zeros(v->value.shape());
    return v->grad;
}

template <typename T>
void backward(const Var<T>& root) {
    S3NET_CHECK(root->value.numel() == 1, "backward() expects a scalar root, got shape ",
                shape_str(root->value.shape()));
    // Iterative post-order topological sort.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    grad_buf(root)[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->grad.numel() > 0) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    S3NET_CHECK(a->value.same_shape(b->value), "add: shape mismatch ",
                shape_str(a->value.shape()), " vs ", shape_str(b->value.shape()));
    const int64_t n = a->value.numel();
    Tensor<T> out(a->value.shape());
    const T* pa = a->value.data();
    const T* pb = b->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    return make_op<T>(std::move(out), {a, b}, [a, b, n](Node<T>& self) {
        const T* g = self.grad.data();
        if (a->requires_grad) {
            T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
            for (int64_t i = 0; i < n; ++i) da[i] += g[i];
        }
        if (b->requires_grad) {
            T* db = grad_buf(b).data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
            for (int64_t i = 0; i < n; ++i) db[i] += g[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    S3NET_CHECK(a->value.same_shape(b->value), "mul: shape mismatch ",
                shape_str(a->value.shape()), " vs ", shape_str(b->value.shape()));
    const int64_t n = a->value.numel();
    Tensor<T> out(a->value.shape());
    const T* pa = a->value.data();
    const T* pb = b->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    return make_op<T>(std::move(out), {a, b}, [a, b, n](Node<T>& self) {
        const T* g = self.grad.data();
        if (a->requires_grad) {
            T* da = grad_buf(a).data();
            const T* pb2 = b->value.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] * pb2[i];
        }
        if (b->requires_grad) {
            T* db = grad_buf(b).data();
            const T* pa2 = a->value.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
            for (int64_t i = 0; i < n; ++i) db[i] += g[i] * pa2[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
    const int64_t n = a->value.numel();
    Tensor<T> out(a->value.shape());
    const T* pa = a->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    return make_op<T>(std::move(out), {a}, [a, c, n](Node<T>& self) {
        if (!a->requires_grad) return;
        const T* g = self.grad.data();
        T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * c;
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    const int64_t n = a->value.numel();
    Tensor<T> out(a->value.shape());
    const T* pa = a->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
    return make_op<T>(std::move(out), {a}, [a, n](Node<T>& self) {
        if (!a->requires_grad) return;
        const T* g = self.grad.data();
        const T* pa2 = a->value.data();
        T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
        for (int64_t i = 0; i < n; ++i) da[i] += pa2[i] > T(0) ? g[i] : T(0);
    });
}

namespace detail {
// Split a shape around `axis` into [outer, extent, inner] for block copies.
inline void axis_blocks(const std::vector<int64_t>& shape, int64_t axis, int64_t& outer,
                        int64_t& extent, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
    extent = shape[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace detail

template <typename T>
Var<T> concat(int64_t axis, const std::vector<Var<T>>& parts) {
    S3NET_CHECK(!parts.empty(), "concat: no inputs");
    const auto& s0 = parts[0]->value.shape();
    S3NET_CHECK(axis >= 0 && axis < static_cast<int64_t>(s0.size()), "concat: bad axis ", axis);
    int64_t total = 0;
    for (const auto& p : parts) {
        const auto& s = p->value.shape();
        S3NET_CHECK(s.size() == s0.size(), "concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            S3NET_CHECK(static_cast<int64_t>(i) == axis || s[i] == s0[i],
                        "concat: extent mismatch on axis ", i);
        total += s[static_cast<size_t>(axis)];
    }
    std::vector<int64_t> out_shape = s0;
    out_shape[static_cast<size_t>(axis)] = total;
    int64_t outer = 1, ext0 = 0, inner = 1;
    detail::axis_blocks(out_shape, axis, outer, ext0, inner);

    Tensor<T> out(out_shape);
    T* po = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t ext = p->value.size(axis);
        const T* pp = p->value.data();
#pragma omp parallel for schedule(static) if (outer * ext * inner > (1 << 15))
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pp + o * ext * inner, pp + (o + 1) * ext * inner,
                      po + (o * total + off) * inner);
        off += ext;
    }
    return make_op<T>(std::move(out), parts, [parts, axis, total, outer, inner](Node<T>& self) {
        const T* g = self.grad.data();
        int64_t off2 = 0;
        for (const auto& p : parts) {
            const int64_t ext = p->value.size(axis);
            if (p->requires_grad) {
                T* dp = grad_buf(p).data();
#pragma omp parallel for schedule(static) if (outer * ext * inner > (1 << 15))
                for (int64_t o = 0; o < outer; ++o) {
                    const T* src = g + (o * total + off2) * inner;
                    T* dst = dp + o * ext * inner;
                    for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                }
            }
            off2 += ext;
        }
    });
}

template <typename T>
Var<T> narrow(const Var<T>& a, int64_t axis, int64_t start, int64_t len) {
    const auto& s = a->value.shape();
    S3NET_CHECK(axis >= 0 && axis < static_cast<int64_t>(s.size()), "narrow: bad axis ", axis);
    const int64_t ext = s[static_cast<size_t>(axis)];
    S3NET_CHECK(start >= 0 && len >= 1 && start + len <= ext, "narrow: range [", start, ", ",
                start + len, ") out of extent ", ext);
    int64_t outer = 1, extent = 0, inner = 1;
    detail::axis_blocks(s, axis, outer, extent, inner);
    std::vector<int64_t> out_shape = s;
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor<T> out(out_shape);
    const T* pa = a->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (outer * len * inner > (1 << 15))
    for (int64_t o = 0; o < outer; ++o)
        std::copy(pa + (o * ext + start) * inner, pa + (o * ext + start + len) * inner,
                  po + o * len * inner);
    return make_op<T>(std::move(out), {a}, [a, ext, start, len, outer, inner](Node<T>& self) {
        if (!a->requires_grad) return;
        const T* g = self.grad.data();
        T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (outer * len * inner > (1 << 15))
        for (int64_t o = 0; o < outer; ++o) {
            const T* src = g + o * len * inner;
            T* dst = da + (o * ext + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> new_shape) {
    Tensor<T> out = a->value.reshaped(std::move(new_shape));
    const int64_t n = out.numel();
    return make_op<T>(std::move(out), {a}, [a, n](Node<T>& self) {
        if (!a->requires_grad) return;
        const T* g = self.grad.data();
        T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (n > (1 << 15))
        for (int64_t i = 0; i < n; ++i) da[i] += g[i];
    });
}

// vol [N,C,D,H,W] + slice [N,C,H,W] broadcast over the D axis.
template <typename T>
Var<T> broadcast_add_depth(const Var<T>& vol, const Var<T>& slice) {
    const auto& vs = vol->value.shape();
    const auto& ss = slice->value.shape();
    S3NET_CHECK(vs.size() == 5 && ss.size() == 4, "broadcast_add_depth: expected 5D + 4D");
    S3NET_CHECK(vs[0] == ss[0] && vs[1] == ss[1] && vs[3] == ss[2] && vs[4] == ss[3],
                "broadcast_add_depth: shape mismatch ", shape_str(vs), " vs ", shape_str(ss));
    const int64_t nc = vs[0] * vs[1], d = vs[2], hw = vs[3] * vs[4];
    Tensor<T> out(vs);
    const T* pv = vol->value.data();
    const T* ps = slice->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (nc * d * hw > (1 << 15))
    for (int64_t o = 0; o < nc; ++o)
        for (int64_t k = 0; k < d; ++k) {
            const T* v = pv + (o * d + k) * hw;
            const T* s = ps + o * hw;
            T* dst = po + (o * d + k) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] = v[i] + s[i];
        }
    return make_op<T>(std::move(out), {vol, slice}, [vol, slice, nc, d, hw](Node<T>& self) {
        const T* g = self.grad.data();
        if (vol->requires_grad) {
            T* dv = grad_buf(vol).data();
            const int64_t n = nc * d * hw;
#pragma omp parallel for schedule(static) if (n > (1 << 15))
            for (int64_t i = 0; i < n; ++i) dv[i] += g[i];
        }
        if (slice->requires_grad) {
            T* ds = grad_buf(slice).data();
#pragma omp parallel for schedule(static) if (nc * hw > (1 << 15))
            for (int64_t o = 0; o < nc; ++o)
                for (int64_t i = 0; i < hw; ++i) {
                    T acc = T(0);
                    for (int64_t k = 0; k < d; ++k) acc += g[(o * d + k) * hw + i];
                    ds[o * hw + i] += acc;
                }
        }
    });
}

// Softmax along `axis`, computed with max subtraction.
template <typename T>
Var<T> softmax(const Var<T>& a, int64_t axis) {
    const auto& s = a->value.shape();
    int64_t outer = 1, ext = 0, inner = 1;
    detail::axis_blocks(s, axis, outer, ext, inner);
    Tensor<T> out(s);
    const T* pa = a->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (outer * inner > 256)
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const T* x = pa + o * ext * inner + i;
            T* y = po + o * ext * inner + i;
            T mx = x[0];
            for (int64_t k = 1; k < ext; ++k) mx = std::max(mx, x[k * inner]);
            T sum = T(0);
            for (int64_t k = 0; k < ext; ++k) {
                const T e = std::exp(x[k * inner] - mx);
                y[k * inner] = e;
                sum += e;
            }
            const T norm = T(1) / sum;
            for (int64_t k = 0; k < ext; ++k) y[k * inner] *= norm;
        }
    return make_op<T>(std::move(out), {a}, [a, outer, ext, inner](Node<T>& self) {
        if (!a->requires_grad) return;
        const T* g = self.grad.data();
        const T* p = self.value.data();
        T* da = grad_buf(a).data();
#pragma omp parallel for schedule(static) if (outer * inner > 256)
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const int64_t base = o * ext * inner + i;
                T dot = T(0);
                for (int64_t k = 0; k < ext; ++k) dot += g[base + k * inner] * p[base + k * inner];
                for (int64_t k = 0; k < ext; ++k)
                    da[base + k * inner] += p[base + k * inner] * (g[base + k * inner] - dot);
            }
    });
}

// Probability-weighted sum over axis 1 of [N, D, H, W] with values v[k] = v0 + k.
// This is the soft-argmax expectation over an affine candidate grid.
template <typename T>
Var<T> expectation_axis1(const Var<T>& p, T v0) {
    const auto& s = p->value.shape();
    S3NET_CHECK(s.size() == 4, "expectation_axis1: expected [N, D, H, W], got ", shape_str(s));
    const int64_t n = s[0], d = s[1], hw = s[2] * s[3];
    Tensor<T> out({s[0], s[2], s[3]});
    const T* pp = p->value.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) if (n * hw > (1 << 14))
    for (int64_t o = 0; o < n; ++o)
        for (int64_t i = 0; i < hw; ++i) {
            T acc = T(0);
            for (int64_t k = 0; k < d; ++k) acc += pp[(o * d + k) * hw + i] * (v0 + T(k));
            po[o * hw + i] = acc;
        }
    return make_op<T>(std::move(out), {p}, [p, n, d, hw, v0](Node<T>& self) {
        if (!p->requires_grad) return;
        const T* g = self.grad.data();
        T* dp = grad_buf(p).data();
#pragma omp parallel for schedule(static) if (n * hw > (1 << 14))
        for (int64_t o = 0; o < n; ++o)
            for (int64_t k = 0; k < d; ++k)
                for (int64_t i = 0; i < hw; ++i)
                    dp[(o * d + k) * hw + i] += g[o * hw + i] * (v0 + T(k));
    });
}

// Weighted sum of scalar vars: sum_i w_i * x_i. Used to assemble losses.
template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
    S3NET_CHECK(!terms.empty(), "weighted_sum: no terms");
    Tensor<T> out({1});
    std::vector<Var<T>> parents;
    for (const auto& [w, v] : terms) {
        S3NET_CHECK(v->value.numel() == 1, "weighted_sum: non-scalar term");
        out[0] += w * v->value[0];
        parents.push_back(v);
    }
    auto weights = std::make_shared<std::vector<T>>();
    for (const auto& [w, v] : terms) weights->push_back(w);
    return make_op<T>(std::move(out), parents, [parents, weights](Node<T>& self) {
        const T g = self.grad[0];
        for (size_t i = 0; i < parents.size(); ++i)
            if (parents[i]->requires_grad) grad_buf(parents[i])[0] += g * (*weights)[i];
    });
}

}  // namespace s3net::ag
