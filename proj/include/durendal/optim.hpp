#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "durendal/errors.hpp"
#include "durendal/rng.hpp"
#include "durendal/tensor.hpp"

namespace durendal {

/// Bias-corrected Adam over one parameter tensor. Weight decay enters as an
/// additive L2 term on the gradient (classic formulation, not decoupled).
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

struct AdagradState {
    std::vector<double> accum;
    double lr = 0.01;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

inline void adam_step(AdamState& s, Tensor& param, const std::vector<double>& grads) {
    if (grads.size() != param.values.size())
        throw DimensionError("adam_step: grad size " + std::to_string(grads.size()) +
                             " vs param size " + std::to_string(param.values.size()));
    if (s.m.empty()) s.m.assign(param.values.size(), 0.0);
    if (s.v.empty()) s.v.assign(param.values.size(), 0.0);
    if (s.m.size() != param.values.size() || s.v.size() != param.values.size())
        throw DimensionError("adam_step: state buffers do not match parameter shape");
    s.t += 1;
    double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < param.values.size(); ++i) {
        double g = grads[i] + s.weight_decay * param.values[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        double mhat = s.m[i] / bc1;
        double vhat = s.v[i] / bc2;
        param.values[i] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
    }
}

inline void adagrad_step(AdagradState& s, Tensor& param, const std::vector<double>& grads) {
    if (grads.size() != param.values.size())
        throw DimensionError("adagrad_step: grad size " + std::to_string(grads.size()) +
                             " vs param size " + std::to_string(param.values.size()));
    if (s.accum.empty()) s.accum.assign(param.values.size(), 0.0);
    if (s.accum.size() != param.values.size())
        throw DimensionError("adagrad_step: state buffer does not match parameter shape");
    for (std::size_t i = 0; i < param.values.size(); ++i) {
        double g = grads[i] + s.weight_decay * param.values[i];
        s.accum[i] += g * g;
        param.values[i] -= s.lr * g / (std::sqrt(s.accum[i]) + s.epsilon);
    }
}

/// Seeded uniform init in +-1/sqrt(fan_in), addressed by a stable label so
/// the result is independent of construction order.
inline void init_uniform_fanin(Tensor& t, std::size_t fan_in, std::uint64_t seed,
                               const std::string& label) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    RngStream rng(seed, label);
    for (auto& v : t.values) v = rng.next_double(-bound, bound);
}

/// Max relative error between analytic gradients and central finite
/// differences, over every entry of every parameter.
///
/// `run(true)` must build the loss on a fresh tape and backward() it
/// (accumulating into the params' grads); `run(false)` must evaluate the
/// same loss without touching grads. Both return the loss value.
inline double grad_check(const std::function<double(bool)>& run, std::span<Tensor* const> params,
                         double perturbation) {
    if (perturbation <= 0.0) throw ContractError("grad_check: perturbation must be positive");
    for (Tensor* p : params) p->zero_grad();
    double base = run(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite function value");
    double worst = 0.0;
    for (Tensor* p : params) {
        std::vector<double> analytic = p->grad;
        for (std::size_t i = 0; i < p->values.size(); ++i) {
            double keep = p->values[i];
            p->values[i] = keep + perturbation;
            double up = run(false);
            p->values[i] = keep - perturbation;
            double dn = run(false);
            p->values[i] = keep;
            if (!std::isfinite(up) || !std::isfinite(dn))
                throw NumericError("grad_check: non-finite function value under perturbation");
            double numeric = (up - dn) / (2.0 * perturbation);
            double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace durendal
