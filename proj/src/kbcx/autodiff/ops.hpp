#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "kbcx/autodiff/array.hpp"
#include "kbcx/autodiff/tape.hpp"

namespace kbcx::ops {

namespace detail {

inline void require(bool ok, const char* op, const std::string& what) {
    if (!ok) fail(ErrorCode::Shape, std::string(op) + ": " + what);
}

template <typename T>
void expect_same(const char* op, const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename T, typename F>
Var<T> unary(Var<T> a, F&& f, std::function<void(Tape<T>&, std::size_t, std::size_t)> bw) {
    Array<T> out(a.shape());
    const auto& x = a.value().data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, bw](Tape<T>& t, std::size_t self) { bw(t, self, ia); });
}

}  // namespace detail

enum class Transpose { No, Yes };

/// a[m x k] * b[k x n], or a[m x k] * b[n x k]^T when `tb` is Yes.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, Transpose tb = Transpose::No) {
    detail::require(a.shape().size() == 2 && b.shape().size() == 2, "matmul", "operands must be 2-d");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const bool bt = tb == Transpose::Yes;
    const std::size_t bk = bt ? b.shape()[1] : b.shape()[0];
    const std::size_t n = bt ? b.shape()[0] : b.shape()[1];
    detail::require(k == bk, "matmul", "inner dimensions differ: " + to_string(a.shape()) + " * " +
                                           to_string(b.shape()) + (bt ? "^T" : ""));
    Array<T> out(Shape{m, n});
    const T* A = a.value().data.data();
    const T* B = b.value().data.data();
    T* C = out.data.data();
    if (!bt) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = A[i * k + p];
                if (av == T{0}) continue;
                const T* brow = B + p * n;
                T* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const T* arow = A + i * k;
                const T* brow = B + j * k;
                T s{0};
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                C[i * n + j] = s;
            }
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const T* G = t.grad(self).data.data();
        const T* A = t.value(ia).data.data();
        const T* B = t.value(ib).data.data();
        if (t.requires_grad(ia)) {
            T* GA = t.grad(ia).data.data();
            // dA = G * B^T (or G * B when b was transposed)
            for (std::size_t i = 0; i < m; ++i) {
                if (!bt) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const T* brow = B + p * n;
                        T s{0};
                        for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * brow[j];
                        GA[i * k + p] += s;
                    }
                } else {
                    for (std::size_t j = 0; j < n; ++j) {
                        const T g = G[i * n + j];
                        if (g == T{0}) continue;
                        const T* brow = B + j * k;
                        for (std::size_t p = 0; p < k; ++p) GA[i * k + p] += g * brow[p];
                    }
                }
            }
        }
        if (t.requires_grad(ib)) {
            T* GB = t.grad(ib).data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const T g = G[i * n + j];
                    if (g == T{0}) continue;
                    if (!bt) {
                        for (std::size_t p = 0; p < k; ++p) GB[p * n + j] += A[i * k + p] * g;
                    } else {
                        for (std::size_t p = 0; p < k; ++p) GB[j * k + p] += A[i * k + p] * g;
                    }
                }
        }
    });
}

/// Batched product a[B x m x k] * b[B x k x n].
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b) {
    detail::require(a.shape().size() == 3 && b.shape().size() == 3, "bmm", "operands must be 3-d");
    const std::size_t bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
    detail::require(b.shape()[0] == bs && b.shape()[1] == k, "bmm",
                    "incompatible shapes " + to_string(a.shape()) + " * " + to_string(b.shape()));
    Array<T> out(Shape{bs, m, n});
    const T* A = a.value().data.data();
    const T* B = b.value().data.data();
    for (std::size_t s = 0; s < bs; ++s)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = A[(s * m + i) * k + p];
                const T* brow = B + (s * k + p) * n;
                T* crow = out.data.data() + (s * m + i) * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const T* G = t.grad(self).data.data();
        const T* A = t.value(ia).data.data();
        const T* B = t.value(ib).data.data();
        const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
        T* GA = ga ? t.grad(ia).data.data() : nullptr;
        T* GB = gb ? t.grad(ib).data.data() : nullptr;
        for (std::size_t s = 0; s < bs; ++s)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const T* grow = G + (s * m + i) * n;
                    const T* brow = B + (s * k + p) * n;
                    if (ga) {
                        T acc{0};
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        GA[(s * m + i) * k + p] += acc;
                    }
                    if (gb) {
                        const T av = A[(s * m + i) * k + p];
                        T* gbrow = GB + (s * k + p) * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::expect_same("add", a, b);
    Array<T> out = a.value();
    const auto& y = b.value().data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        for (std::size_t in : {ia, ib}) {
            if (!t.requires_grad(in)) continue;
            auto& gi = t.grad(in).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::expect_same("sub", a, b);
    Array<T> out = a.value();
    const auto& y = b.value().data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        if (t.requires_grad(ia)) {
            auto& gi = t.grad(ia).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            auto& gi = t.grad(ib).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::expect_same("mul", a, b);
    Array<T> out = a.value();
    const auto& y = b.value().data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        const auto& x = t.value(ia).data;
        const auto& y = t.value(ib).data;
        if (t.requires_grad(ia)) {
            auto& gi = t.grad(ia).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i];
        }
        if (t.requires_grad(ib)) {
            auto& gi = t.grad(ib).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * x[i];
        }
    });
}

/// a[m x n] + b[n] broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> b) {
    detail::require(a.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == a.shape()[1], "add_row",
                    "expected [m x n] + [n], got " + to_string(a.shape()) + " + " + to_string(b.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Array<T> out = a.value();
    const auto& y = b.value().data;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += y[j];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        if (t.requires_grad(ia)) {
            auto& gi = t.grad(ia).data;
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            auto& gi = t.grad(ib).data;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gi[j] += g[i * n + j];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
    return detail::unary<T>(a, [c](T x) { return c * x; }, [c](Tape<T>& t, std::size_t self, std::size_t ia) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += c * g[i];
    });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
    return detail::unary<T>(a, [c](T x) { return x + c; }, [](Tape<T>& t, std::size_t self, std::size_t ia) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
}

template <typename T>
Var<T> one_minus(Var<T> a) {
    return add_scalar(scale(a, T{-1}), T{1});
}

template <typename T>
Var<T> tanh(Var<T> a) {
    return detail::unary<T>(a, [](T x) { return std::tanh(x); }, [](Tape<T>& t, std::size_t self, std::size_t ia) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        const auto& y = t.value(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (T{1} - y[i] * y[i]);
    });
}

template <typename T>
inline T sigmoid_value(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    return detail::unary<T>(a, [](T x) { return sigmoid_value(x); }, [](Tape<T>& t, std::size_t self, std::size_t ia) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        const auto& y = t.value(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (T{1} - y[i]);
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    return detail::unary<T>(a, [](T x) { return x > T{0} ? x : T{0}; },
                            [](Tape<T>& t, std::size_t self, std::size_t ia) {
                                if (!t.requires_grad(ia)) return;
                                const auto& g = t.grad(self).data;
                                const auto& x = t.value(ia).data;
                                auto& gi = t.grad(ia).data;
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    if (x[i] > T{0}) gi[i] += g[i];
                            });
}

/// Elementwise x^e for non-negative x.
template <typename T>
Var<T> power(Var<T> a, T e) {
    return detail::unary<T>(a, [e](T x) { return std::pow(x, e); },
                            [e](Tape<T>& t, std::size_t self, std::size_t ia) {
                                if (!t.requires_grad(ia)) return;
                                const auto& g = t.grad(self).data;
                                const auto& x = t.value(ia).data;
                                auto& gi = t.grad(ia).data;
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    if (x[i] != T{0}) gi[i] += g[i] * e * std::pow(x[i], e - T{1});
                            });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    detail::require(numel(shape) == a.value().size(), "reshape",
                    "cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    Array<T> out(std::move(shape), a.value().data);
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
}

namespace detail {
// Splits a shape around `axis` into (outer, axis length, inner).
inline std::tuple<std::size_t, std::size_t, std::size_t> split_axis(const Shape& s, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    return {outer, s[axis], inner};
}
}  // namespace detail

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
    detail::require(!parts.empty(), "concat", "no inputs");
    const Shape& first = parts[0].shape();
    detail::require(axis < first.size(), "concat", "axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> lens, ids;
    for (const auto& p : parts) {
        Shape s = p.shape();
        detail::require(s.size() == first.size(), "concat", "rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis)
                detail::require(s[d] == first[d], "concat",
                                "shape mismatch " + to_string(first) + " vs " + to_string(s));
        out_shape[axis] += s[axis];
        lens.push_back(s[axis]);
        ids.push_back(p.id);
    }
    auto [outer, total, inner] = detail::split_axis(out_shape, axis);
    Array<T> out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = parts[k].value().data;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.begin() + o * lens[k] * inner, lens[k] * inner,
                        out.data.begin() + (o * total + offset) * inner);
        offset += lens[k];
    }
    Tape<T>* tape = parts[0].tape;
    return tape->record(std::move(out), ids, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                auto& gi = t.grad(ids[k]).data;
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < lens[k] * inner; ++i)
                        gi[o * lens[k] * inner + i] += g[(o * total + off) * inner + i];
            }
            off += lens[k];
        }
    });
}

/// Elements [begin, end) along `axis`.
template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = a.shape();
    detail::require(axis < s.size() && begin <= end && end <= s[axis], "slice",
                    "range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " + to_string(s));
    auto [outer, total, inner] = detail::split_axis(s, axis);
    const std::size_t len = end - begin;
    Shape out_shape = s;
    out_shape[axis] = len;
    Array<T> out(out_shape);
    const auto& x = a.value().data;
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.begin() + (o * total + begin) * inner, len * inner, out.data.begin() + o * len * inner);
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(ia)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(ia).data;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < len * inner; ++i) gi[(o * total + begin) * inner + i] += g[o * len * inner + i];
    });
}

template <typename T>
Var<T> reduce_sum(Var<T> a) {
    T s{0};
    for (T v : a.value().data) s += v;
    const std::size_t ia = a.id;
    return a.tape->record(Array<T>::scalar(s), {ia}, [ia](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(ia)) return;
        const T g = t.grad(self)[0];
        for (auto& v : t.grad(ia).data) v += g;
    });
}

/// Rows `ids` of a 2-d table; gradients scatter-add back.
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> ids) {
    detail::require(table.shape().size() == 2, "gather_rows", "table must be 2-d");
    const std::size_t n = table.shape()[0], w = table.shape()[1];
    Array<T> out(Shape{ids.size(), w});
    const auto& x = table.value().data;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        detail::require(ids[r] < n, "gather_rows", "row " + std::to_string(ids[r]) + " out of range " + std::to_string(n));
        std::copy_n(x.begin() + ids[r] * w, w, out.data.begin() + r * w);
    }
    const std::size_t it = table.id;
    return table.tape->record(std::move(out), {it}, [it, w, ids = std::move(ids)](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(it)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(it).data;
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t j = 0; j < w; ++j) gi[ids[r] * w + j] += g[r * w + j];
    });
}

/// Row i of `a` where take_a[i], else row i of `b`. Values are copied, so a
/// selected row is bit-identical to its source.
template <typename T>
Var<T> select_rows(Var<T> a, Var<T> b, std::vector<bool> take_a) {
    detail::expect_same("select_rows", a, b);
    detail::require(a.shape().size() == 2 && a.shape()[0] == take_a.size(), "select_rows",
                    "mask length does not match " + to_string(a.shape()));
    const std::size_t w = a.shape()[1];
    Array<T> out = b.value();
    const auto& x = a.value().data;
    for (std::size_t r = 0; r < take_a.size(); ++r)
        if (take_a[r]) std::copy_n(x.begin() + r * w, w, out.data.begin() + r * w);
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=, take_a = std::move(take_a)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self).data;
        for (std::size_t r = 0; r < take_a.size(); ++r) {
            const std::size_t in = take_a[r] ? ia : ib;
            if (!t.requires_grad(in)) continue;
            auto& gi = t.grad(in).data;
            for (std::size_t j = 0; j < w; ++j) gi[r * w + j] += g[r * w + j];
        }
    });
}

/// Valid (no padding), stride-1 cross-correlation.
/// x[B x C x H x W], kernel[O x C x KH x KW] -> [B x O x (H-KH+1) x (W-KW+1)].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    detail::require(xs.size() == 4 && ks.size() == 4, "conv2d", "expected 4-d input and kernel");
    const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const std::size_t O = ks[0], KH = ks[2], KW = ks[3];
    detail::require(ks[1] == C, "conv2d", "kernel channels " + std::to_string(ks[1]) + " != input channels " +
                                              std::to_string(C));
    detail::require(H >= KH && W >= KW, "conv2d", "input " + to_string(xs) + " smaller than kernel " + to_string(ks));
    const std::size_t OH = H - KH + 1, OW = W - KW + 1;
    Array<T> out(Shape{B, O, OH, OW});
    const T* X = x.value().data.data();
    const T* K = kernel.value().data.data();
    T* Y = out.data.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            T* yo = Y + (b * O + o) * OH * OW;
            for (std::size_t c = 0; c < C; ++c) {
                const T* xc = X + (b * C + c) * H * W;
                const T* kc = K + (o * C + c) * KH * KW;
                for (std::size_t u = 0; u < KH; ++u)
                    for (std::size_t v = 0; v < KW; ++v) {
                        const T kv = kc[u * KW + v];
                        for (std::size_t i = 0; i < OH; ++i) {
                            const T* xr = xc + (i + u) * W + v;
                            T* yr = yo + i * OW;
                            for (std::size_t j = 0; j < OW; ++j) yr[j] += kv * xr[j];
                        }
                    }
            }
        }
    const std::size_t ix = x.id, ik = kernel.id;
    return x.tape->record(std::move(out), {ix, ik}, [=](Tape<T>& t, std::size_t self) {
        const T* G = t.grad(self).data.data();
        const T* X = t.value(ix).data.data();
        const T* K = t.value(ik).data.data();
        const bool gx = t.requires_grad(ix), gk = t.requires_grad(ik);
        T* GX = gx ? t.grad(ix).data.data() : nullptr;
        T* GK = gk ? t.grad(ik).data.data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) {
                const T* go = G + (b * O + o) * OH * OW;
                for (std::size_t c = 0; c < C; ++c) {
                    const T* xc = X + (b * C + c) * H * W;
                    const T* kc = K + (o * C + c) * KH * KW;
                    T* gxc = gx ? GX + (b * C + c) * H * W : nullptr;
                    T* gkc = gk ? GK + (o * C + c) * KH * KW : nullptr;
                    for (std::size_t u = 0; u < KH; ++u)
                        for (std::size_t v = 0; v < KW; ++v) {
                            T acc{0};
                            const T kv = kc[u * KW + v];
                            for (std::size_t i = 0; i < OH; ++i) {
                                const T* gr = go + i * OW;
                                const std::size_t base = (i + u) * W + v;
                                for (std::size_t j = 0; j < OW; ++j) {
                                    if (gk) acc += gr[j] * xc[base + j];
                                    if (gx) gxc[base + j] += gr[j] * kv;
                                }
                            }
                            if (gk) gkc[u * KW + v] += acc;
                        }
                }
            }
    });
}

/// Running statistics of a batch-normalization layer.
template <typename T>
struct BatchNormStats {
    const Array<T>* running_mean = nullptr;
    const Array<T>* running_var = nullptr;
    // Written in training mode when set; may alias the read pointers.
    Array<T>* update_mean = nullptr;
    Array<T>* update_var = nullptr;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// Normalizes x[B x C x ...] per channel (axis 1), then applies gamma/beta.
/// Training mode uses batch statistics and updates the running ones when
/// `stats` is provided; inference mode uses the running statistics.
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T> stats, bool training) {
    const Shape& xs = x.shape();
    detail::require(xs.size() >= 2, "batchnorm", "input must be at least 2-d");
    const std::size_t B = xs[0], C = xs[1];
    const std::size_t S = numel(xs) / (B * C);
    detail::require(gamma.shape() == Shape{C} && beta.shape() == Shape{C}, "batchnorm",
                    "scale/shift must have shape [" + std::to_string(C) + "]");
    const T eps = static_cast<T>(kBatchNormEps);
    const T mom = static_cast<T>(kBatchNormMomentum);
    const std::size_t n = B * S;
    Array<T> xhat(xs);
    Array<T> out(xs);
    std::vector<T> inv_std(C);
    const auto& X = x.value().data;
    const auto& g = gamma.value().data;
    const auto& bt = beta.value().data;
    for (std::size_t c = 0; c < C; ++c) {
        T mean, var;
        if (training) {
            T s{0};
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t k = 0; k < S; ++k) s += X[(b * C + c) * S + k];
            mean = s / static_cast<T>(n);
            T v{0};
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t k = 0; k < S; ++k) {
                    const T d = X[(b * C + c) * S + k] - mean;
                    v += d * d;
                }
            var = v / static_cast<T>(n);
            if (stats.update_mean && stats.update_var) {
                const T unbiased = n > 1 ? v / static_cast<T>(n - 1) : var;
                (*stats.update_mean)[c] = (T{1} - mom) * (*stats.update_mean)[c] + mom * mean;
                (*stats.update_var)[c] = (T{1} - mom) * (*stats.update_var)[c] + mom * unbiased;
            }
        } else {
            detail::require(stats.running_mean && stats.running_var, "batchnorm", "inference needs running statistics");
            mean = (*stats.running_mean)[c];
            var = (*stats.running_var)[c];
        }
        inv_std[c] = T{1} / std::sqrt(var + eps);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < S; ++k) {
                const std::size_t i = (b * C + c) * S + k;
                xhat[i] = (X[i] - mean) * inv_std[c];
                out[i] = g[c] * xhat[i] + bt[c];
            }
    }
    const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->record(
        std::move(out), {ix, ig, ib},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
            const auto& G = t.grad(self).data;
            const auto& gam = t.value(ig).data;
            for (std::size_t c = 0; c < C; ++c) {
                T sum_g{0}, sum_gx{0};
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t k = 0; k < S; ++k) {
                        const std::size_t i = (b * C + c) * S + k;
                        sum_g += G[i];
                        sum_gx += G[i] * xhat[i];
                    }
                if (t.requires_grad(ig)) t.grad(ig)[c] += sum_gx;
                if (t.requires_grad(ib)) t.grad(ib)[c] += sum_g;
                if (!t.requires_grad(ix)) continue;
                auto& GX = t.grad(ix).data;
                const T scale = gam[c] * inv_std[c];
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t k = 0; k < S; ++k) {
                        const std::size_t i = (b * C + c) * S + k;
                        if (training) {
                            const T nn = static_cast<T>(n);
                            GX[i] += scale * (G[i] - sum_g / nn - xhat[i] * sum_gx / nn);
                        } else {
                            GX[i] += scale * G[i];
                        }
                    }
            }
        });
}

/// Inverted dropout: identity at inference, zero-or-scale by 1/(1-p) in training.
template <typename T, typename Rng>
Var<T> dropout(Var<T> x, double p, bool training, Rng& rng) {
    if (!training || p <= 0.0) return x;
    detail::require(p < 1.0, "dropout", "rate must be < 1");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    std::bernoulli_distribution keep(1.0 - p);
    Array<T> mask(x.shape());
    for (auto& m : mask.data) m = keep(rng) ? keep_scale : T{0};
    Array<T> out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    const std::size_t ix = x.id;
    return x.tape->record(std::move(out), {ix}, [ix, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(ix)) return;
        const auto& g = t.grad(self).data;
        auto& gi = t.grad(ix).data;
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * mask[i];
    });
}

/// Mean over rows of -log softmax(logits)[row, target[row]].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::vector<std::size_t> targets) {
    const Shape& s = logits.shape();
    detail::require(s.size() == 2 && s[0] == targets.size(), "softmax_cross_entropy",
                    "logits " + to_string(s) + " do not match " + std::to_string(targets.size()) + " targets");
    const std::size_t B = s[0], N = s[1];
    Array<T> probs(s);
    const auto& L = logits.value().data;
    T total{0};
    for (std::size_t b = 0; b < B; ++b) {
        detail::require(targets[b] < N, "softmax_cross_entropy", "target out of range");
        const T* row = L.data() + b * N;
        const T mx = *std::max_element(row, row + N);
        T z{0};
        for (std::size_t j = 0; j < N; ++j) {
            probs[b * N + j] = std::exp(row[j] - mx);
            z += probs[b * N + j];
        }
        for (std::size_t j = 0; j < N; ++j) probs[b * N + j] /= z;
        total += -(row[targets[b]] - mx - std::log(z));
    }
    const std::size_t il = logits.id;
    return logits.tape->record(Array<T>::scalar(total / static_cast<T>(B)), {il},
                               [=, probs = std::move(probs), targets = std::move(targets)](Tape<T>& t, std::size_t self) {
                                   if (!t.requires_grad(il)) return;
                                   const T g = t.grad(self)[0] / static_cast<T>(B);
                                   auto& gi = t.grad(il).data;
                                   for (std::size_t b = 0; b < B; ++b)
                                       for (std::size_t j = 0; j < N; ++j) {
                                           const T y = j == targets[b] ? T{1} : T{0};
                                           gi[b * N + j] += g * (probs[b * N + j] - y);
                                       }
                               });
}

/// Complex number split into real and imaginary parts of equal shape.
template <typename T>
struct ComplexVar {
    Var<T> re;
    Var<T> im;
};

template <typename T>
ComplexVar<T> complex_mul(ComplexVar<T> a, ComplexVar<T> b) {
    for (const Var<T>* v : {&a.im, &b.re, &b.im}) detail::expect_same("complex_mul", a.re, *v);
    const auto &ar = a.re.value().data, &ai = a.im.value().data, &br = b.re.value().data, &bi = b.im.value().data;
    Array<T> re(a.re.shape()), im(a.re.shape());
    for (std::size_t i = 0; i < re.size(); ++i) {
        re[i] = ar[i] * br[i] - ai[i] * bi[i];
        im[i] = ar[i] * bi[i] + ai[i] * br[i];
    }
    const std::size_t iar = a.re.id, iai = a.im.id, ibr = b.re.id, ibi = b.im.id;
    auto [r, m] = a.re.tape->record_pair(std::move(re), std::move(im), {iar, iai, ibr, ibi},
                                         [=](Tape<T>& t, std::size_t self) {
                                             const std::size_t n = t.value(self).size();
                                             const Array<T> zero(t.value(self).shape);
                                             const auto& gr = t.has_grad(self) ? t.grad(self).data : zero.data;
                                             const auto& gi = t.has_grad(self + 1) ? t.grad(self + 1).data : zero.data;
                                             const auto &ar = t.value(iar).data, &ai = t.value(iai).data;
                                             const auto &br = t.value(ibr).data, &bi = t.value(ibi).data;
                                             // grad_a = G * conj(b), grad_b = G * conj(a)
                                             for (std::size_t i = 0; i < n; ++i) {
                                                 if (t.requires_grad(iar)) t.grad(iar)[i] += gr[i] * br[i] + gi[i] * bi[i];
                                                 if (t.requires_grad(iai)) t.grad(iai)[i] += gi[i] * br[i] - gr[i] * bi[i];
                                                 if (t.requires_grad(ibr)) t.grad(ibr)[i] += gr[i] * ar[i] + gi[i] * ai[i];
                                                 if (t.requires_grad(ibi)) t.grad(ibi)[i] += gi[i] * ar[i] - gr[i] * ai[i];
                                             }
                                         });
    return {r, m};
}

/// num / den. A denominator with modulus below `eps` is rescaled to modulus
/// `eps` keeping its phase (zero maps to eps + 0i); no gradient flows into a
/// clamped denominator.
template <typename T>
ComplexVar<T> complex_div(ComplexVar<T> num, ComplexVar<T> den, T eps) {
    for (const Var<T>* v : {&num.im, &den.re, &den.im}) detail::expect_same("complex_div", num.re, *v);
    const std::size_t n = num.re.value().size();
    const auto &nr = num.re.value().data, &ni = num.im.value().data;
    const auto &dr0 = den.re.value().data, &di0 = den.im.value().data;
    Array<T> re(num.re.shape()), im(num.re.shape());
    std::vector<T> dr(n), di(n);
    std::vector<bool> clamped(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        dr[i] = dr0[i];
        di[i] = di0[i];
        const T mod = std::hypot(dr[i], di[i]);
        if (mod < eps) {
            clamped[i] = true;
            if (mod == T{0}) {
                dr[i] = eps;
                di[i] = T{0};
            } else {
                dr[i] *= eps / mod;
                di[i] *= eps / mod;
            }
        }
        const T m2 = dr[i] * dr[i] + di[i] * di[i];
        re[i] = (nr[i] * dr[i] + ni[i] * di[i]) / m2;
        im[i] = (ni[i] * dr[i] - nr[i] * di[i]) / m2;
    }
    const std::size_t inr = num.re.id, ini = num.im.id, idr = den.re.id, idi = den.im.id;
    auto [r, m] = num.re.tape->record_pair(
        std::move(re), std::move(im), {inr, ini, idr, idi},
        [=, dr = std::move(dr), di = std::move(di), clamped = std::move(clamped)](Tape<T>& t, std::size_t self) {
            const Array<T> zero(t.value(self).shape);
            const auto& gr = t.has_grad(self) ? t.grad(self).data : zero.data;
            const auto& gi = t.has_grad(self + 1) ? t.grad(self + 1).data : zero.data;
            const auto& qr = t.value(self).data;
            const auto& qi = t.value(self + 1).data;
            for (std::size_t i = 0; i < n; ++i) {
                const T m2 = dr[i] * dr[i] + di[i] * di[i];
                // f'(num) = 1/den; grad = G * conj(1/den) = G * den / |den|^2
                const T ur = dr[i] / m2, ui = di[i] / m2;
                const T gnr = gr[i] * ur - gi[i] * ui;
                const T gni = gr[i] * ui + gi[i] * ur;
                if (t.requires_grad(inr)) t.grad(inr)[i] += gnr;
                if (t.requires_grad(ini)) t.grad(ini)[i] += gni;
                if (clamped[i]) continue;
                // f'(den) = -q/den; grad = G * conj(f'(den))
                const T fr = -(qr[i] * dr[i] + qi[i] * di[i]) / m2;
                const T fi = -(qi[i] * dr[i] - qr[i] * di[i]) / m2;
                // G * conj(f)
                const T gdr = gr[i] * fr + gi[i] * fi;
                const T gdi = gi[i] * fr - gr[i] * fi;
                if (t.requires_grad(idr)) t.grad(idr)[i] += gdr;
                if (t.requires_grad(idi)) t.grad(idi)[i] += gdi;
            }
        });
    return {r, m};
}

}  // namespace kbcx::ops
