#include "aligntf/optim.hpp"

#include <cmath>
#include <string>

namespace aligntf {

template <typename Real>
void adam_step(const std::vector<Tensor<Real>>& params, AdamState<Real>& state, const std::vector<bool>* frozen) {
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), Real(0));
            state.second_moment.emplace_back(p.size(), Real(0));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw StateError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw StateError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        if (state.first_moment[i].size() != params[i].size()) {
            throw StateError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
        }
    }

    const auto& cfg = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const Real b1 = static_cast<Real>(cfg.beta1);
    const Real b2 = static_cast<Real>(cfg.beta2);
    const Real correction1 = static_cast<Real>(1.0 - std::pow(cfg.beta1, t));
    const Real correction2 = static_cast<Real>(1.0 - std::pow(cfg.beta2, t));
    const Real lr = static_cast<Real>(cfg.learning_rate);
    const Real eps = static_cast<Real>(cfg.epsilon);
    const Real decay = static_cast<Real>(cfg.learning_rate * cfg.weight_decay);

    if (frozen != nullptr && frozen->size() != params.size()) throw StateError("adam_step: frozen mask size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<Real> p = params[i];
        if (frozen != nullptr && (*frozen)[i]) {
            p.zero_grad();
            continue;
        }
        auto w = p.values();
        auto g = p.grad_mut();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (Real(1) - b1) * g[j];
            v[j] = b2 * v[j] + (Real(1) - b2) * g[j] * g[j];
            const Real mhat = m[j] / correction1;
            const Real vhat = v[j] / correction2;
            if (decay != Real(0)) w[j] -= decay * w[j];
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        p.zero_grad();
    }
}

template <typename Real>
double clip_grad_norm(const std::vector<Tensor<Real>>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params) {
        for (Real g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const Real factor = static_cast<Real>(max_norm / (norm + 1e-12));
        for (auto p : params) {
            if (!p.has_grad()) continue;
            for (auto& g : p.grad_mut()) g *= factor;
        }
    }
    return norm;
}

template void adam_step<float>(const std::vector<Tensor<float>>&, AdamState<float>&, const std::vector<bool>*);
template void adam_step<double>(const std::vector<Tensor<double>>&, AdamState<double>&, const std::vector<bool>*);
template double clip_grad_norm<float>(const std::vector<Tensor<float>>&, double);
template double clip_grad_norm<double>(const std::vector<Tensor<double>>&, double);

}  // namespace aligntf
