#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "entailkg/embeddings.h"
#include "entailkg/graph.h"
#include "entailkg/rng.h"

namespace entailkg {

// Where kernel taps land relative to output index n.
//   right:    reads e(n + tau), zero past the end.
//   centered: reads e(n + tau - (W-1)/2), zero outside [0, d).
enum class Padding : std::uint8_t { right = 0, centered = 1 };

const char* to_string(Padding p);
Padding parse_padding(std::string_view name);

struct DecoderShape {
    std::size_t entities = 0;
    std::size_t relations = 0;  // including inverses
    std::size_t dim = 0;
    std::size_t kernels = 200;
    std::size_t kernel_width = 5;
    Padding padding = Padding::right;

    bool operator==(const DecoderShape&) const = default;
};

// Trainable parameters of the convolutional triplet scorer.
//   entity      N x d
//   relation    R x d  (R counts inverse relations)
//   kernel      K x 2 x W, kernel i channel c tap tau at (i*2 + c)*W + tau;
//               channel 0 convolves the head row, channel 1 the relation row
//   projection  (K*d) x d, row index i*d + n matches the row-major flatten
//               of the K x d feature map
struct DecoderParams {
    DecoderShape shape;
    std::vector<float> entity;
    std::vector<float> relation;
    std::vector<float> kernel;
    std::vector<float> projection;

    explicit DecoderParams(const DecoderShape& s = {});

    std::size_t parameter_count() const {
        return entity.size() + relation.size() + kernel.size() + projection.size();
    }
    std::span<const float> entity_row(NodeId v) const { return {entity.data() + v * shape.dim, shape.dim}; }
    std::span<const float> relation_row(RelationId r) const {
        return {relation.data() + r * shape.dim, shape.dim};
    }
    float& tap(std::size_t i, std::size_t channel, std::size_t tau) {
        return kernel[(i * 2 + channel) * shape.kernel_width + tau];
    }
    float tap(std::size_t i, std::size_t channel, std::size_t tau) const {
        return kernel[(i * 2 + channel) * shape.kernel_width + tau];
    }

    bool operator==(const DecoderParams&) const = default;
};

struct DecoderInit {
    std::uint64_t seed = 0;
    // Used when no entity embeddings are supplied.
    float entity_scale = 0.1f;
    float relation_scale = 0.1f;
};

// Entity rows are copied from `entity_init` when given (rows and dim must
// match the shape), otherwise drawn uniformly. Kernels and projection use
// Glorot-uniform bounds.
DecoderParams init_decoder(const DecoderShape& shape, const DecoderInit& init,
                           const EmbeddingMatrix* entity_init = nullptr);

// Gradient accumulator mirroring DecoderParams in double precision.
struct Gradients {
    std::vector<double> entity;
    std::vector<double> relation;
    std::vector<double> kernel;
    std::vector<double> projection;
    std::vector<std::uint8_t> entity_touched;
    std::vector<std::uint8_t> relation_touched;
    bool dense_touched = false;  // kernel and projection

    Gradients() = default;
    explicit Gradients(const DecoderShape& shape);

    void clear();
    void add(const Gradients& other);
    void scale(double factor);
    double squared_norm() const;
};

// Cached activations of one forward pass, sufficient for backward().
struct Tape {
    NodeId head = 0;
    RelationId relation = 0;
    std::vector<double> features;   // K x d conv output
    std::vector<double> pre_activation;
    std::vector<double> hidden;     // after ReLU and dropout
    std::vector<double> dropout_mask;  // empty when dropout is off
    std::vector<double> logits;
};

struct ForwardOptions {
    double dropout = 0.0;
    Rng* dropout_rng = nullptr;  // required when dropout > 0
};

// K x d feature map of the convolution over (e_h, e_r), row-major.
std::vector<double> conv_feature(const DecoderParams& p, NodeId h, RelationId r);
// Same computation on explicit rows (used for entailed heads and tests).
std::vector<double> conv_feature(const DecoderParams& p, std::span<const float> head_row,
                                 std::span<const float> relation_row);

// Pre-sigmoid scores of (h, r, t) for every entity t.
std::vector<double> score_logits(const DecoderParams& p, NodeId h, RelationId r, Tape* tape = nullptr,
                                 const ForwardOptions& options = {});
// sigmoid(score_logits), each entry in (0, 1).
std::vector<double> score_all(const DecoderParams& p, NodeId h, RelationId r, Tape* tape = nullptr,
                              const ForwardOptions& options = {});

// Accumulates d(loss)/d(params) into grads given d(loss)/d(logits).
void backward(const DecoderParams& p, const Tape& tape, std::span<const double> logit_grad, Gradients& grads);
// Same, given d(loss)/d(scores) for the post-sigmoid scores.
void backward_from_scores(const DecoderParams& p, const Tape& tape, std::span<const double> score_grad,
                          Gradients& grads);

double sigmoid(double x);

}  // namespace entailkg
