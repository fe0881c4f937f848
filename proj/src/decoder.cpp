#include "entailkg/decoder.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace entailkg {

const char* to_string(Padding p) {
    return p == Padding::centered ? "centered" : "right";
}

Padding parse_padding(std::string_view name) {
    if (name == "right" || name == "zero-pad-right") return Padding::right;
    if (name == "centered" || name == "zero-pad-centered") return Padding::centered;
    throw std::invalid_argument("unknown padding '" + std::string(name) + "'");
}

DecoderParams::DecoderParams(const DecoderShape& s)
    : shape(s),
      entity(s.entities * s.dim),
      relation(s.relations * s.dim),
      kernel(s.kernels * 2 * s.kernel_width),
      projection(s.kernels * s.dim * s.dim) {}

namespace {

void fill_uniform(std::vector<float>& v, std::uint64_t seed, double bound) {
    Rng rng(seed);
    for (auto& x : v) x = static_cast<float>(bound * (2.0 * rng.uniform01() - 1.0));
}

std::ptrdiff_t tap_offset(const DecoderShape& s) {
    return s.padding == Padding::centered ? static_cast<std::ptrdiff_t>((s.kernel_width - 1) / 2) : 0;
}

void check_ids(const DecoderParams& p, NodeId h, RelationId r) {
    if (h >= p.shape.entities) throw std::out_of_range("decoder: head id " + std::to_string(h) + " out of range");
    if (r >= p.shape.relations) {
        throw std::out_of_range("decoder: relation id " + std::to_string(r) + " out of range");
    }
}

}  // namespace

DecoderParams init_decoder(const DecoderShape& shape, const DecoderInit& init, const EmbeddingMatrix* entity_init) {
    if (shape.entities == 0 || shape.relations == 0 || shape.dim == 0 || shape.kernels == 0 ||
        shape.kernel_width == 0) {
        throw std::invalid_argument("decoder: every shape dimension must be positive");
    }
    DecoderParams p(shape);
    if (entity_init) {
        if (entity_init->rows() != shape.entities || entity_init->dim() != shape.dim) {
            throw std::invalid_argument("decoder: entity initialization is " + std::to_string(entity_init->rows()) +
                                        "x" + std::to_string(entity_init->dim()) + ", expected " +
                                        std::to_string(shape.entities) + "x" + std::to_string(shape.dim));
        }
        std::copy(entity_init->data().begin(), entity_init->data().end(), p.entity.begin());
    } else {
        const auto m = random_init(shape.entities, shape.dim, Rng::derive(init.seed, 0), init.entity_scale);
        std::copy(m.data().begin(), m.data().end(), p.entity.begin());
    }
    const auto rel = random_init(shape.relations, shape.dim, Rng::derive(init.seed, 1), init.relation_scale);
    std::copy(rel.data().begin(), rel.data().end(), p.relation.begin());
    const double kernel_fan = static_cast<double>(2 * shape.kernel_width + 1);
    fill_uniform(p.kernel, Rng::derive(init.seed, 2), std::sqrt(6.0 / kernel_fan));
    const double proj_fan = static_cast<double>(shape.kernels * shape.dim + shape.dim);
    fill_uniform(p.projection, Rng::derive(init.seed, 3), std::sqrt(6.0 / proj_fan));
    return p;
}

Gradients::Gradients(const DecoderShape& s)
    : entity(s.entities * s.dim, 0.0),
      relation(s.relations * s.dim, 0.0),
      kernel(s.kernels * 2 * s.kernel_width, 0.0),
      projection(s.kernels * s.dim * s.dim, 0.0),
      entity_touched(s.entities, 0),
      relation_touched(s.relations, 0) {}

void Gradients::clear() {
    std::fill(entity.begin(), entity.end(), 0.0);
    std::fill(relation.begin(), relation.end(), 0.0);
    std::fill(kernel.begin(), kernel.end(), 0.0);
    std::fill(projection.begin(), projection.end(), 0.0);
    std::fill(entity_touched.begin(), entity_touched.end(), 0);
    std::fill(relation_touched.begin(), relation_touched.end(), 0);
    dense_touched = false;
}

void Gradients::add(const Gradients& o) {
    if (o.entity.size() != entity.size() || o.projection.size() != projection.size()) {
        throw std::invalid_argument("gradients: shape mismatch");
    }
    for (std::size_t i = 0; i < entity.size(); ++i) entity[i] += o.entity[i];
    for (std::size_t i = 0; i < relation.size(); ++i) relation[i] += o.relation[i];
    for (std::size_t i = 0; i < kernel.size(); ++i) kernel[i] += o.kernel[i];
    for (std::size_t i = 0; i < projection.size(); ++i) projection[i] += o.projection[i];
    for (std::size_t i = 0; i < entity_touched.size(); ++i) entity_touched[i] |= o.entity_touched[i];
    for (std::size_t i = 0; i < relation_touched.size(); ++i) relation_touched[i] |= o.relation_touched[i];
    dense_touched = dense_touched || o.dense_touched;
}

void Gradients::scale(double factor) {
    for (auto* v : {&entity, &relation, &kernel, &projection})
        for (auto& x : *v) x *= factor;
}

double Gradients::squared_norm() const {
    double s = 0.0;
    for (const auto* v : {&entity, &relation, &kernel, &projection})
        for (double x : *v) s += x * x;
    return s;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> conv_feature(const DecoderParams& p, std::span<const float> head_row,
                                 std::span<const float> relation_row) {
    const auto& s = p.shape;
    const auto d = static_cast<std::ptrdiff_t>(s.dim);
    const auto offset = tap_offset(s);
    std::vector<double> m(s.kernels * s.dim, 0.0);
    for (std::size_t i = 0; i < s.kernels; ++i) {
        double* out = m.data() + i * s.dim;
        for (std::ptrdiff_t n = 0; n < d; ++n) {
            double acc = 0.0;
            for (std::size_t tau = 0; tau < s.kernel_width; ++tau) {
                const std::ptrdiff_t src = n + static_cast<std::ptrdiff_t>(tau) - offset;
                if (src < 0 || src >= d) continue;
                acc += static_cast<double>(p.tap(i, 0, tau)) * head_row[static_cast<std::size_t>(src)] +
                       static_cast<double>(p.tap(i, 1, tau)) * relation_row[static_cast<std::size_t>(src)];
            }
            out[n] = acc;
        }
    }
    return m;
}

std::vector<double> conv_feature(const DecoderParams& p, NodeId h, RelationId r) {
    check_ids(p, h, r);
    return conv_feature(p, p.entity_row(h), p.relation_row(r));
}

std::vector<double> score_logits(const DecoderParams& p, NodeId h, RelationId r, Tape* tape,
                                 const ForwardOptions& options) {
    check_ids(p, h, r);
    const auto& s = p.shape;
    const std::size_t d = s.dim;

    auto features = conv_feature(p, p.entity_row(h), p.relation_row(r));

    std::vector<double> pre(d, 0.0);
    for (std::size_t q = 0; q < features.size(); ++q) {
        const double x = features[q];
        if (x == 0.0) continue;
        const float* w = p.projection.data() + q * d;
        for (std::size_t j = 0; j < d; ++j) pre[j] += x * static_cast<double>(w[j]);
    }

    std::vector<double> hidden(d);
    for (std::size_t j = 0; j < d; ++j) hidden[j] = pre[j] > 0.0 ? pre[j] : 0.0;

    std::vector<double> mask;
    if (options.dropout > 0.0) {
        if (!options.dropout_rng) throw std::invalid_argument("decoder: dropout requires an rng");
        if (options.dropout >= 1.0) throw std::invalid_argument("decoder: dropout must be < 1");
        const double keep_scale = 1.0 / (1.0 - options.dropout);
        mask.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            mask[j] = options.dropout_rng->uniform01() < options.dropout ? 0.0 : keep_scale;
            hidden[j] *= mask[j];
        }
    }

    std::vector<double> logits(s.entities);
    for (std::size_t t = 0; t < s.entities; ++t) {
        const float* e = p.entity.data() + t * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += hidden[j] * static_cast<double>(e[j]);
        logits[t] = acc;
    }

    if (tape) {
        tape->head = h;
        tape->relation = r;
        tape->features = std::move(features);
        tape->pre_activation = std::move(pre);
        tape->hidden = std::move(hidden);
        tape->dropout_mask = std::move(mask);
        tape->logits = logits;
    }
    return logits;
}

std::vector<double> score_all(const DecoderParams& p, NodeId h, RelationId r, Tape* tape,
                              const ForwardOptions& options) {
    auto scores = score_logits(p, h, r, tape, options);
    for (auto& x : scores) x = sigmoid(x);
    return scores;
}

void backward(const DecoderParams& p, const Tape& tape, std::span<const double> logit_grad, Gradients& grads) {
    const auto& s = p.shape;
    const std::size_t d = s.dim;
    if (logit_grad.size() != s.entities || tape.logits.size() != s.entities) {
        throw std::invalid_argument("backward: upstream gradient has " + std::to_string(logit_grad.size()) +
                                    " entries, tape/params expect " + std::to_string(s.entities));
    }
    if (tape.features.size() != s.kernels * d || tape.hidden.size() != d) {
        throw std::invalid_argument("backward: tape does not match decoder shape");
    }
    if (grads.entity.size() != p.entity.size() || grads.projection.size() != p.projection.size()) {
        throw std::invalid_argument("backward: gradient buffer does not match decoder shape");
    }

    // logits -> hidden and tail rows
    std::vector<double> d_hidden(d, 0.0);
    for (std::size_t t = 0; t < s.entities; ++t) {
        const double g = logit_grad[t];
        if (g == 0.0) continue;
        const float* e = p.entity.data() + t * d;
        double* ge = grads.entity.data() + t * d;
        for (std::size_t j = 0; j < d; ++j) {
            d_hidden[j] += g * static_cast<double>(e[j]);
            ge[j] += g * tape.hidden[j];
        }
        grads.entity_touched[t] = 1;
    }

    // dropout and ReLU
    std::vector<double> d_pre(d);
    for (std::size_t j = 0; j < d; ++j) {
        double g = d_hidden[j];
        if (!tape.dropout_mask.empty()) g *= tape.dropout_mask[j];
        d_pre[j] = tape.pre_activation[j] > 0.0 ? g : 0.0;
    }

    // projection
    std::vector<double> d_features(tape.features.size(), 0.0);
    for (std::size_t q = 0; q < tape.features.size(); ++q) {
        const double x = tape.features[q];
        const float* w = p.projection.data() + q * d;
        double* gw = grads.projection.data() + q * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            gw[j] += x * d_pre[j];
            acc += static_cast<double>(w[j]) * d_pre[j];
        }
        d_features[q] = acc;
    }

    // convolution
    const auto head_row = p.entity_row(tape.head);
    const auto rel_row = p.relation_row(tape.relation);
    double* g_head = grads.entity.data() + static_cast<std::size_t>(tape.head) * d;
    double* g_rel = grads.relation.data() + static_cast<std::size_t>(tape.relation) * d;
    const auto offset = tap_offset(s);
    const auto sd = static_cast<std::ptrdiff_t>(d);
    for (std::size_t i = 0; i < s.kernels; ++i) {
        for (std::ptrdiff_t n = 0; n < sd; ++n) {
            const double g = d_features[i * d + static_cast<std::size_t>(n)];
            if (g == 0.0) continue;
            for (std::size_t tau = 0; tau < s.kernel_width; ++tau) {
                const std::ptrdiff_t src = n + static_cast<std::ptrdiff_t>(tau) - offset;
                if (src < 0 || src >= sd) continue;
                const auto u = static_cast<std::size_t>(src);
                grads.kernel[(i * 2 + 0) * s.kernel_width + tau] += g * head_row[u];
                grads.kernel[(i * 2 + 1) * s.kernel_width + tau] += g * rel_row[u];
                g_head[u] += g * static_cast<double>(p.tap(i, 0, tau));
                g_rel[u] += g * static_cast<double>(p.tap(i, 1, tau));
            }
        }
    }
    grads.entity_touched[tape.head] = 1;
    grads.relation_touched[tape.relation] = 1;
    grads.dense_touched = true;
}

void backward_from_scores(const DecoderParams& p, const Tape& tape, std::span<const double> score_grad,
                          Gradients& grads) {
    if (score_grad.size() != tape.logits.size()) {
        throw std::invalid_argument("backward: upstream gradient has " + std::to_string(score_grad.size()) +
                                    " entries, tape holds " + std::to_string(tape.logits.size()));
    }
    std::vector<double> logit_grad(score_grad.size());
    for (std::size_t t = 0; t < score_grad.size(); ++t) {
        const double sp = sigmoid(tape.logits[t]);
        logit_grad[t] = score_grad[t] * sp * (1.0 - sp);
    }
    backward(p, tape, logit_grad, grads);
}

}  // namespace entailkg
