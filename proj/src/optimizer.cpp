#include "entailkg/optimizer.h"

#include <cmath>
#include <stdexcept>

namespace entailkg {

AdamState::AdamState(const DecoderShape& s)
    : m_entity(s.entities * s.dim, 0.0f),
      v_entity(s.entities * s.dim, 0.0f),
      m_relation(s.relations * s.dim, 0.0f),
      v_relation(s.relations * s.dim, 0.0f),
      m_kernel(s.kernels * 2 * s.kernel_width, 0.0f),
      v_kernel(s.kernels * 2 * s.kernel_width, 0.0f),
      m_projection(s.kernels * s.dim * s.dim, 0.0f),
      v_projection(s.kernels * s.dim * s.dim, 0.0f) {}

void adam_update(std::span<float> param, std::span<const double> grad, std::span<float> m, std::span<float> v,
                 std::uint64_t t, const AdamConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw std::invalid_argument("adam: parameter, gradient and moment shapes differ");
    }
    if (t == 0) throw std::invalid_argument("adam: step count starts at 1");
    const double t_d = static_cast<double>(t);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t_d);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t_d);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double m_hat = mi / bias1;
        const double v_hat = vi / bias2;
        param[i] = static_cast<float>(static_cast<double>(param[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

namespace {

void update_rows(std::vector<float>& param, const std::vector<double>& grad, std::vector<float>& m,
                 std::vector<float>& v, const std::vector<std::uint8_t>& touched, std::size_t dim,
                 std::uint64_t t, const AdamConfig& cfg) {
    for (std::size_t row = 0; row < touched.size(); ++row) {
        if (!touched[row]) continue;
        const std::size_t off = row * dim;
        bool nonzero = false;
        for (std::size_t j = 0; j < dim && !nonzero; ++j) nonzero = grad[off + j] != 0.0;
        if (!nonzero) continue;
        adam_update(std::span(param).subspan(off, dim), std::span(grad).subspan(off, dim),
                    std::span(m).subspan(off, dim), std::span(v).subspan(off, dim), t, cfg);
    }
}

}  // namespace

void adam_step(DecoderParams& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.entity.size() != params.entity.size() || grads.relation.size() != params.relation.size() ||
        grads.kernel.size() != params.kernel.size() || grads.projection.size() != params.projection.size() ||
        state.m_entity.size() != params.entity.size() || state.m_projection.size() != params.projection.size()) {
        throw std::invalid_argument("adam: parameter, gradient and optimizer state shapes differ");
    }
    const std::uint64_t t = ++state.step;
    const std::size_t d = params.shape.dim;
    update_rows(params.entity, grads.entity, state.m_entity, state.v_entity, grads.entity_touched, d, t, cfg);
    update_rows(params.relation, grads.relation, state.m_relation, state.v_relation, grads.relation_touched, d, t,
                cfg);
    if (grads.dense_touched) {
        adam_update(params.kernel, grads.kernel, state.m_kernel, state.v_kernel, t, cfg);
        adam_update(params.projection, grads.projection, state.m_projection, state.v_projection, t, cfg);
    }
}

double clip_global_norm(Gradients& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
    return norm;
}

}  // namespace entailkg
