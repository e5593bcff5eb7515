#pragma once

// Shared oracles and randomized checks for models and encoders.

#include <complex>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kbcx/models/link_model.hpp"
#include "support/gradcheck.hpp"

namespace kbcx::testing {

/// Central differences over every trainable entry of `store` that `build`
/// binds. `build(binding)` returns a scalar and must be deterministic.
template <typename Build>
double gradcheck_store(ParameterStore<double>& store, Build build, double h = 1e-5) {
    std::map<std::string, std::vector<double>> analytic;
    {
        Tape<double> tape;
        Binding<double> b(tape, std::as_const(store));
        Var<double> loss = build(b);
        tape.backward(loss);
        for (const auto& [name, id] : b.bound_trainable()) analytic[name] = tape.grad(id).data;
    }
    auto eval = [&] {
        Tape<double> tape(false);
        Binding<double> b(tape, std::as_const(store));
        return build(b).value().item();
    };
    double worst = 0;
    for (const auto& [name, grad] : analytic) {
        auto& values = store.at(name).data;
        std::vector<double> numeric(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + h;
            const double up = eval();
            values[i] = orig - h;
            const double down = eval();
            values[i] = orig;
            numeric[i] = (up - down) / (2 * h);
        }
        worst = std::max(worst, relative_error(grad, numeric));
    }
    return worst;
}

inline std::vector<std::string> numbered_names(const std::string& stem, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(stem + " " + std::to_string(i));
    return out;
}

inline ModelSpec small_spec(ModelKind kind, EncoderKind encoder) {
    ModelSpec s;
    s.model = kind;
    s.encoder = encoder;
    s.dim = kind == ModelKind::ConvE ? 8 : (kind == ModelKind::FiveStar ? 3 : 4);
    s.dropout = kind == ModelKind::FiveStar ? 0.0 : 0.25;
    s.n3_lambda = kind == ModelKind::FiveStar ? 0.1 : 0.0;
    s.word_dim = 3;
    return s;
}

/// Max relative gradient error of one model at one random point: all
/// trainable parameters perturbed to U(-0.3, 0.3), training-mode forward with
/// a fixed dropout mask, loss = cross-entropy over all entities + N3 / B.
inline double model_gradient_error(ModelKind kind, EncoderKind encoder, std::uint64_t seed) {
    const ModelSpec spec = small_spec(kind, encoder);
    auto ents = numbered_names("node", 6);
    ents.push_back("???");
    std::vector<std::string> rels = {"links to", "near", "inverse of links to", "inverse of near"};
    // Names without known tokens exercise the fallback rows.
    if (encoder == EncoderKind::Gru) ents.back() = "entity_6";
    auto model = LinkModel<double>::create(spec, ents, rels, seed);
    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& e : model.params().entries())
        if (e.trainable)
            for (auto& v : e.value.data) v = u(rng);
    std::uniform_int_distribution<std::size_t> pick_e(0, ents.size() - 1), pick_r(0, rels.size() - 1);
    std::vector<std::size_t> heads, relations, tails;
    for (int i = 0; i < 4; ++i) {
        heads.push_back(pick_e(rng));
        relations.push_back(pick_r(rng));
        tails.push_back(pick_e(rng));
    }
    const std::uint64_t mask_seed = rng();
    return gradcheck_store(model.params(), [&](Binding<double>& b) {
        std::mt19937_64 mask_rng(mask_seed);
        ForwardContext ctx;
        ctx.training = true;
        ctx.rng = &mask_rng;
        Var<double> h = model.rows(b, Side::Entity, heads);
        Var<double> r = model.rows(b, Side::Relation, relations);
        Var<double> all = model.all_rows(b, Side::Entity);
        std::optional<Var<double>> bias;
        if (kind == ModelKind::ConvE) bias = model.all_bias(b);
        Var<double> loss = ops::softmax_cross_entropy(model.scores(b, h, r, all, bias, ctx), tails);
        if (auto reg = model.regularizer({h, r, model.rows(b, Side::Entity, tails)}))
            loss = ops::add(loss, ops::scale(*reg, 1.0 / static_cast<double>(heads.size())));
        return loss;
    });
}

inline double tucker_oracle(const Array<double>& core, const std::vector<double>& h, const std::vector<double>& r,
                            const std::vector<double>& t) {
    const std::size_t d = h.size();
    double s = 0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) s += core[(i * d + j) * d + k] * h[i] * r[j] * t[k];
    return s;
}

inline double five_star_oracle(const std::vector<std::complex<double>>& h,
                               const std::array<std::vector<std::complex<double>>, 4>& abcd,
                               const std::vector<std::complex<double>>& t) {
    double s = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const auto theta = (abcd[0][i] * h[i] + abcd[1][i]) / (abcd[2][i] * h[i] + abcd[3][i]);
        s += (theta * std::conj(t[i])).real();
    }
    return s;
}

/// Largest |batched - loop| over random TuckER triples at dimension d.
inline double tucker_contraction_error(std::size_t d, std::uint64_t seed, int trials = 20) {
    std::mt19937_64 rng(seed);
    double worst = 0;
    for (int k = 0; k < trials; ++k) {
        auto core = random_array({d, d, d}, rng);
        auto h = random_array({d}, rng), r = random_array({d}, rng), t = random_array({d}, rng);
        worst = std::max(worst, std::abs(score_tucker(core, h, r, t) - tucker_oracle(core, h.data, r.data, t.data)));
    }
    return worst;
}

/// Largest |engine - std::complex| over random 5★E triples at dimension d.
inline double five_star_error(std::size_t d, std::uint64_t seed, int trials = 20) {
    std::mt19937_64 rng(seed);
    double worst = 0;
    for (int k = 0; k < trials; ++k) {
        auto hr = random_array({d}, rng), hi = random_array({d}, rng);
        auto tr = random_array({d}, rng), ti = random_array({d}, rng);
        std::array<Array<double>, 8> abcd;
        for (auto& a : abcd) a = random_array({d}, rng);
        std::array<std::vector<std::complex<double>>, 4> c;
        std::vector<std::complex<double>> h, t;
        for (std::size_t i = 0; i < d; ++i) {
            h.emplace_back(hr[i], hi[i]);
            t.emplace_back(tr[i], ti[i]);
            for (int q = 0; q < 4; ++q) c[q].emplace_back(abcd[2 * q][i], abcd[2 * q + 1][i]);
        }
        worst = std::max(worst, std::abs(score_5star(hr, hi, abcd, tr, ti) - five_star_oracle(h, c, t)));
    }
    return worst;
}

/// ConvE with zero kernel and projection at inference: scores - bias, max |.|
/// (exactly zero when the degenerate path is exact).
inline double conve_zero_kernel_deviation(std::uint64_t seed) {
    ModelSpec spec;
    spec.model = ModelKind::ConvE;
    spec.dim = 12;
    auto model = LinkModel<double>::create(spec, numbered_names("e", 5), numbered_names("r", 2), seed);
    for (auto& v : model.params().at("conve.kernel").data) v = 0;
    for (auto& v : model.params().at("conve.projection").data) v = 0;
    std::mt19937_64 rng(seed);
    auto& bias = model.params().at("conve.tail_bias");
    bias = random_array({5}, rng);
    Tape<double> tape(false);
    Binding<double> b(tape, std::as_const(model.params()));
    Var<double> s = model.scores(b, model.rows(b, Side::Entity, {0, 3}), model.rows(b, Side::Relation, {1, 0}),
                                 model.all_rows(b, Side::Entity), model.all_bias(b), ForwardContext{});
    double worst = 0;
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t j = 0; j < 5; ++j) worst = std::max(worst, std::abs(s.value().at(q, j) - bias[j]));
    return worst;
}

}  // namespace kbcx::testing
