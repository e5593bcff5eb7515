#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "kbcx/autodiff/gru.hpp"
#include "kbcx/autodiff/parameters.hpp"

namespace kbcx {

inline constexpr std::size_t kMaxNameTokens = 32;

template <typename T>
void fill_uniform(Array<T>& a, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : a.data) v = static_cast<T>(u(rng));
}

template <typename T>
void fill_normal(Array<T>& a, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    for (auto& v : a.data) v = static_cast<T>(n(rng));
}

/// Adds `prefix.{w,u,b}_{z,r,h}` for input width `d_in` and hidden width `d`.
template <typename T>
void add_gru_params(ParameterStore<T>& store, const std::string& prefix, std::size_t d_in, std::size_t d,
                    std::mt19937_64& rng) {
    for (const char* g : {"z", "r", "h"}) {
        Array<T> w(Shape{d_in, d});
        fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
        store.add(prefix + ".w_" + g, std::move(w));
    }
    for (const char* g : {"z", "r", "h"}) {
        Array<T> u(Shape{d, d});
        fill_uniform(u, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        store.add(prefix + ".u_" + g, std::move(u));
    }
    for (const char* g : {"z", "r", "h"}) store.add(prefix + ".b_" + g, Array<T>(Shape{d}, T{0}));
}

/// Runs the recurrent encoder left to right from a zero state over each token
/// list and returns the final states [B x d]. Rows of empty lists are zero.
template <typename T>
Var<T> run_gru(Binding<T>& b, const std::string& prefix, Var<T> words,
               const std::vector<std::vector<std::size_t>>& token_lists) {
    using namespace ops;
    const GruVars<T> p = bind_gru(b, prefix);
    const std::size_t batch = token_lists.size();
    const std::size_t d = p.u_z.shape()[0];
    std::size_t steps = 0;
    for (const auto& l : token_lists) steps = std::max(steps, l.size());
    Var<T> h = b.tape().constant(Array<T>(Shape{batch, d}, T{0}));
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<std::size_t> ids(batch, 0);
        std::vector<bool> active(batch, false);
        bool all_active = true;
        for (std::size_t i = 0; i < batch; ++i) {
            if (t < token_lists[i].size()) {
                ids[i] = token_lists[i][t];
                active[i] = true;
            } else {
                all_active = false;
            }
        }
        Var<T> next = gru_cell(gather_rows(words, std::move(ids)), h, p);
        h = all_active ? next : select_rows(next, h, std::move(active));
    }
    return h;
}

}  // namespace kbcx
