#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "kbcx/autodiff/array.hpp"
#include "kbcx/autodiff/tape.hpp"

namespace kbcx::testing {

inline Array<double> random_array(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Array<double> a(shape);
    for (auto& v : a.data) v = u(rng);
    return a;
}

/// ||a - n|| / max(||a||, ||n||, floor) with Euclidean norms.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-8) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

/// `build(tape, leaves)` must return a scalar loss and be deterministic.
/// Returns the largest relative error over all leaves.
template <typename Build>
double gradcheck(std::vector<Array<double>> inputs, Build build, double h = 1e-5) {
    std::vector<std::vector<double>> analytic;
    {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
        Var<double> loss = build(tape, leaves);
        tape.backward(loss);
        for (const auto& l : leaves) analytic.push_back(tape.grad(l.id).data);
    }
    auto eval = [&](const std::vector<Array<double>>& xs) {
        Tape<double> tape(false);
        std::vector<Var<double>> leaves;
        for (const auto& in : xs) leaves.push_back(tape.leaf(in));
        return build(tape, leaves).value().item();
    };
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<double> numeric(inputs[k].size());
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double up = eval(inputs);
            inputs[k][i] = orig - h;
            const double down = eval(inputs);
            inputs[k][i] = orig;
            numeric[i] = (up - down) / (2 * h);
        }
        worst = std::max(worst, relative_error(analytic[k], numeric));
    }
    return worst;
}

}  // namespace kbcx::testing
