#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "kbcx/autodiff/ops.hpp"
#include "kbcx/autodiff/parameters.hpp"
#include "kbcx/models/spec.hpp"

namespace kbcx {

struct ForwardContext {
    bool training = false;
    // Skips every batch-normalization layer (pure contraction).
    bool bypass_batchnorm = false;
    std::mt19937_64* rng = nullptr;
};

inline constexpr double kMobiusEps = 1e-6;

namespace layers {

template <typename T>
Var<T> batchnorm_layer(Binding<T>& b, const std::string& prefix, Var<T> x, const ForwardContext& ctx) {
    if (ctx.bypass_batchnorm) return x;
    return ops::batchnorm(x, b(prefix + ".gamma"), b(prefix + ".beta"), b.batchnorm_stats(prefix), ctx.training);
}

template <typename T>
Var<T> dropout_layer(Var<T> x, double p, const ForwardContext& ctx) {
    if (!ctx.training || p <= 0.0) return x;
    if (!ctx.rng) fail(ErrorCode::Internal, "dropout in training mode needs a random generator");
    return ops::dropout(x, p, true, *ctx.rng);
}

}  // namespace layers

/// Adds `prefix.{gamma,beta,running_mean,running_var}` of width `n`.
template <typename T>
void add_batchnorm_params(ParameterStore<T>& store, const std::string& prefix, std::size_t n) {
    store.add(prefix + ".gamma", Array<T>(Shape{n}, T{1}));
    store.add(prefix + ".beta", Array<T>(Shape{n}, T{0}));
    store.add(prefix + ".running_mean", Array<T>(Shape{n}, T{0}), false);
    store.add(prefix + ".running_var", Array<T>(Shape{n}, T{1}), false);
}

/// TuckER over a batch: heads[B x d], rels[B x d], cands[N x d] -> [B x N].
/// Uses `tucker.core` [d x d x d] indexed (head, relation, tail) and the
/// batch-norm layers `tucker.bn0` (head input) and `tucker.bn1` (contracted).
template <typename T>
Var<T> tucker_scores(Binding<T>& b, Var<T> heads, Var<T> rels, Var<T> cands, double dropout,
                     const ForwardContext& ctx) {
    using namespace ops;
    Var<T> core = b("tucker.core");
    const std::size_t d = core.shape()[0];
    const std::size_t batch = heads.shape()[0];
    if (heads.shape() != Shape{batch, d} || rels.shape() != Shape{batch, d} || cands.shape().size() != 2 ||
        cands.shape()[1] != d) {
        fail(ErrorCode::Shape, "tucker: heads " + to_string(heads.shape()) + ", relations " + to_string(rels.shape()) +
                                   ", candidates " + to_string(cands.shape()) + " incompatible with d=" +
                                   std::to_string(d));
    }
    Var<T> x = layers::batchnorm_layer(b, "tucker.bn0", heads, ctx);
    x = layers::dropout_layer(x, dropout, ctx);
    Var<T> xw = reshape(matmul(x, reshape(core, Shape{d, d * d})), Shape{batch, d, d});
    Var<T> y = reshape(bmm(reshape(rels, Shape{batch, 1, d}), xw), Shape{batch, d});
    y = layers::batchnorm_layer(b, "tucker.bn1", y, ctx);
    y = layers::dropout_layer(y, dropout, ctx);
    return matmul(y, cands, Transpose::Yes);
}

/// ConvE over a batch: heads, rels [B x d], cands [N x d], bias [N] -> [B x N].
template <typename T>
Var<T> conve_scores(Binding<T>& b, Var<T> heads, Var<T> rels, Var<T> cands, Var<T> bias, const ConveGeometry& g,
                    double dropout, const ForwardContext& ctx) {
    using namespace ops;
    const std::size_t batch = heads.shape()[0];
    const std::size_t d = g.rows * g.cols;
    if (heads.shape() != Shape{batch, d} || rels.shape() != Shape{batch, d} || cands.shape().size() != 2 ||
        cands.shape()[1] != d || bias.shape() != Shape{cands.shape()[0]}) {
        fail(ErrorCode::Shape, "conve: heads " + to_string(heads.shape()) + ", relations " + to_string(rels.shape()) +
                                   ", candidates " + to_string(cands.shape()) + ", bias " + to_string(bias.shape()) +
                                   " incompatible with d=" + std::to_string(d));
    }
    Var<T> x = concat<T>({reshape(heads, Shape{batch, 1, g.rows, g.cols}), reshape(rels, Shape{batch, 1, g.rows, g.cols})},
                         2);
    x = layers::batchnorm_layer(b, "conve.bn0", x, ctx);
    x = relu(conv2d(x, b("conve.kernel")));
    x = layers::dropout_layer(x, dropout, ctx);
    x = matmul(reshape(x, Shape{batch, g.flat()}), b("conve.projection"));
    x = relu(layers::batchnorm_layer(b, "conve.bn1", x, ctx));
    return add_row(matmul(x, cands, Transpose::Yes), bias);
}

/// Per-dimension Möbius map (a z + b) / (c z + d) on complex rows.
template <typename T>
ops::ComplexVar<T> mobius(ops::ComplexVar<T> z, ops::ComplexVar<T> a, ops::ComplexVar<T> bb, ops::ComplexVar<T> c,
                          ops::ComplexVar<T> dd) {
    using namespace ops;
    auto az = complex_mul(a, z);
    auto cz = complex_mul(c, z);
    ComplexVar<T> num{add(az.re, bb.re), add(az.im, bb.im)};
    ComplexVar<T> den{add(cz.re, dd.re), add(cz.im, dd.im)};
    return complex_div(num, den, static_cast<T>(kMobiusEps));
}

/// Re<theta, conj(t)> for every row pair: theta [B x d], cands [N x d] -> [B x N].
template <typename T>
Var<T> complex_inner_scores(ops::ComplexVar<T> theta, ops::ComplexVar<T> cands) {
    using namespace ops;
    return add(matmul(theta.re, cands.re, Transpose::Yes), matmul(theta.im, cands.im, Transpose::Yes));
}

/// Splits columns [re | im] of width 2d.
template <typename T>
ops::ComplexVar<T> complex_columns(Var<T> x, std::size_t d, std::size_t block = 0) {
    return {ops::slice(x, 1, 2 * block * d, (2 * block + 1) * d), ops::slice(x, 1, (2 * block + 1) * d, (2 * block + 2) * d)};
}

/// 5★E over a batch. Entity rows are [re | im] (2d); relation rows are
/// [a~ | b | c | d~] in complex blocks (8d) with a = 1 + a~ and d = 1 + d~, so
/// the zero relation row is the identity map.
template <typename T>
Var<T> five_star_scores(Var<T> heads, Var<T> rels, Var<T> cands, std::size_t d) {
    using namespace ops;
    const std::size_t batch = heads.shape()[0];
    if (heads.shape() != Shape{batch, 2 * d} || rels.shape() != Shape{batch, 8 * d} || cands.shape().size() != 2 ||
        cands.shape()[1] != 2 * d) {
        fail(ErrorCode::Shape, "5star: heads " + to_string(heads.shape()) + ", relations " + to_string(rels.shape()) +
                                   ", candidates " + to_string(cands.shape()) + " incompatible with d=" +
                                   std::to_string(d));
    }
    auto a = complex_columns(rels, d, 0);
    auto c = complex_columns(rels, d, 2);
    auto dd = complex_columns(rels, d, 3);
    a.re = add_scalar(a.re, T{1});
    dd.re = add_scalar(dd.re, T{1});
    auto theta = mobius(complex_columns(heads, d), a, complex_columns(rels, d, 1), c, dd);
    return complex_inner_scores(theta, complex_columns(cands, d));
}

/// lambda * sum |z|^3 over complex components of rows laid out as blocks of
/// [re | im] of width d each.
template <typename T>
Var<T> n3_penalty(const std::vector<Var<T>>& rows, std::size_t d, T lambda) {
    using namespace ops;
    if (rows.empty()) fail(ErrorCode::InvalidArgument, "n3_penalty: no embeddings");
    Tape<T>* tape = rows[0].tape;
    if (lambda == T{0}) return tape->constant(Array<T>::scalar(T{0}));
    std::vector<Var<T>> parts;
    for (const auto& x : rows) {
        const std::size_t w = x.shape()[1];
        if (w % (2 * d) != 0) fail(ErrorCode::Shape, "n3_penalty: width " + std::to_string(w) + " not a multiple of 2d");
        for (std::size_t blk = 0; blk < w / (2 * d); ++blk) {
            auto z = complex_columns(x, d, blk);
            parts.push_back(reduce_sum(power(add(mul(z.re, z.re), mul(z.im, z.im)), T{1.5})));
        }
    }
    Var<T> total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
    return scale(total, lambda);
}

/// Single-triple TuckER score through the batched contraction with batch
/// normalization bypassed.
template <typename T>
T score_tucker(const Array<T>& core, const Array<T>& h, const Array<T>& r, const Array<T>& t) {
    const std::size_t d = h.size();
    if (core.shape != Shape{d, d, d} || r.size() != d || t.size() != d) {
        fail(ErrorCode::Shape, "score_tucker: core " + to_string(core.shape) + " with vectors of length " +
                                   std::to_string(h.size()) + ", " + std::to_string(r.size()) + ", " +
                                   std::to_string(t.size()));
    }
    ParameterStore<T> store;
    store.add("tucker.core", core);
    Tape<T> tape(false);
    Binding<T> b(tape, store);
    ForwardContext ctx;
    ctx.bypass_batchnorm = true;
    auto row = [&](const Array<T>& v) { return tape.constant(Array<T>(Shape{1, d}, v.data)); };
    return tucker_scores(b, row(h), row(r), row(t), 0.0, ctx).value().item();
}

/// Single-triple 5★E score with explicit Möbius coefficients (no identity offset).
template <typename T>
T score_5star(const Array<T>& h_re, const Array<T>& h_im, const std::array<Array<T>, 8>& abcd, const Array<T>& t_re,
              const Array<T>& t_im) {
    const std::size_t d = h_re.size();
    Tape<T> tape(false);
    auto row = [&](const Array<T>& v) {
        if (v.size() != d) fail(ErrorCode::Shape, "score_5star: all vectors must have length " + std::to_string(d));
        return tape.constant(Array<T>(Shape{1, d}, v.data));
    };
    ops::ComplexVar<T> z{row(h_re), row(h_im)};
    auto theta = mobius(z, ops::ComplexVar<T>{row(abcd[0]), row(abcd[1])}, ops::ComplexVar<T>{row(abcd[2]), row(abcd[3])},
                        ops::ComplexVar<T>{row(abcd[4]), row(abcd[5])}, ops::ComplexVar<T>{row(abcd[6]), row(abcd[7])});
    return complex_inner_scores(theta, ops::ComplexVar<T>{row(t_re), row(t_im)}).value().item();
}

}  // namespace kbcx
