#pragma once

#include <string>

#include "kbcx/autodiff/ops.hpp"
#include "kbcx/autodiff/parameters.hpp"

namespace kbcx {

/// Gate weights of a single-layer gated recurrent unit bound to a tape.
/// Input weights are [d_in x d], recurrent weights [d x d], biases [d].
template <typename T>
struct GruVars {
    Var<T> w_z, w_r, w_h;
    Var<T> u_z, u_r, u_h;
    Var<T> b_z, b_r, b_h;
};

inline const char* const kGruParamNames[] = {"w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"};

template <typename T>
GruVars<T> bind_gru(Binding<T>& b, const std::string& prefix) {
    return GruVars<T>{b(prefix + ".w_z"), b(prefix + ".w_r"), b(prefix + ".w_h"),
                      b(prefix + ".u_z"), b(prefix + ".u_r"), b(prefix + ".u_h"),
                      b(prefix + ".b_z"), b(prefix + ".b_r"), b(prefix + ".b_h")};
}

/// One step over a batch: x[B x d_in], h[B x d] -> [B x d].
///   z  = sigmoid(x W_z + h U_z + b_z)
///   r  = sigmoid(x W_r + h U_r + b_r)
///   h~ = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * h~
template <typename T>
Var<T> gru_cell(Var<T> x, Var<T> h, const GruVars<T>& p) {
    using namespace ops;
    const Shape& ws = p.w_z.shape();
    const Shape& us = p.u_z.shape();
    if (x.shape().size() != 2 || h.shape().size() != 2 || ws.size() != 2 || us.size() != 2 ||
        x.shape()[1] != ws[0] || h.shape()[1] != us[0] || us[0] != us[1] || ws[1] != us[0] ||
        x.shape()[0] != h.shape()[0]) {
        fail(ErrorCode::Shape, "gru_cell: input " + to_string(x.shape()) + ", hidden " + to_string(h.shape()) +
                                   " incompatible with weights " + to_string(ws) + " / " + to_string(us));
    }
    auto z = sigmoid(add_row(add(matmul(x, p.w_z), matmul(h, p.u_z)), p.b_z));
    auto r = sigmoid(add_row(add(matmul(x, p.w_r), matmul(h, p.u_r)), p.b_r));
    auto cand = tanh(add_row(add(matmul(x, p.w_h), matmul(mul(r, h), p.u_h)), p.b_h));
    return add(mul(one_minus(z), h), mul(z, cand));
}

}  // namespace kbcx
