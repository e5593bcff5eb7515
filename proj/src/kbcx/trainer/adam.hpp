#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "kbcx/autodiff/parameters.hpp"

namespace kbcx {

/// Adam without weight decay, schedule or clipping.
template <typename T>
class Adam {
   public:
    struct Moments {
        Array<T> m, v;
    };

    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Starts a new step; every `update` until the next `begin_step` uses the
    /// same bias correction.
    void begin_step() { ++t_; }

    void update(const std::string& name, Array<T>& param, const Array<T>& grad) {
        auto it = state_.find(name);
        if (it == state_.end()) {
            it = state_.emplace(name, Moments{Array<T>(param.shape, T{0}), Array<T>(param.shape, T{0})}).first;
        }
        if (grad.shape != param.shape) fail(ErrorCode::Shape, "adam: gradient shape mismatch for '" + name + "'");
        auto& [m, v] = it->second;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
        for (std::size_t i = 0; i < param.size(); ++i) {
            const T g = grad[i];
            m[i] = b1 * m[i] + (T{1} - b1) * g;
            v[i] = b2 * v[i] + (T{1} - b2) * g * g;
            const double mhat = static_cast<double>(m[i]) / c1;
            const double vhat = static_cast<double>(v[i]) / c2;
            param[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }

    std::uint64_t steps() const { return t_; }
    const std::map<std::string, Moments>& state() const { return state_; }

   private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace kbcx
