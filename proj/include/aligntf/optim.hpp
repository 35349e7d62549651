#pragma once

#include <cstdint>
#include <vector>

#include "aligntf/tensor.hpp"

namespace aligntf {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.8;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Decoupled (AdamW-style) decay; 0 disables it.
    double weight_decay = 0.0;
};

template <typename Real>
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<std::vector<Real>> first_moment;
    std::vector<std::vector<Real>> second_moment;
};

/// One bias-corrected Adam update over `params`, then zeroes their grads.
/// Throws StateError if a parameter has no gradient buffer. Parameters
/// flagged in `frozen` keep their values and moments.
template <typename Real>
void adam_step(const std::vector<Tensor<Real>>& params, AdamState<Real>& state,
               const std::vector<bool>* frozen = nullptr);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename Real>
double clip_grad_norm(const std::vector<Tensor<Real>>& params, double max_norm);

}  // namespace aligntf
