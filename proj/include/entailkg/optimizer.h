#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "entailkg/decoder.h"

namespace entailkg {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moments mirroring DecoderParams, plus the shared step count.
struct AdamState {
    std::uint64_t step = 0;
    std::vector<float> m_entity, v_entity;
    std::vector<float> m_relation, v_relation;
    std::vector<float> m_kernel, v_kernel;
    std::vector<float> m_projection, v_projection;

    AdamState() = default;
    explicit AdamState(const DecoderShape& shape);

    bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam update of one contiguous block for step t >= 1.
void adam_update(std::span<float> param, std::span<const double> grad, std::span<float> m, std::span<float> v,
                 std::uint64_t t, const AdamConfig& cfg);

// Increments the step counter, then updates every entity/relation row the
// gradients touched with a nonzero entry, and the kernels and projection
// when the gradients cover them. Untouched rows keep their moments.
void adam_step(DecoderParams& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg);

// Rescales grads so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace entailkg
