#pragma once

// Straight-line reference implementations used by the tests. They share no
// code with the library beyond plain data types, run in long double, and
// favour readability over speed.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "entailkg/decoder.h"
#include "entailkg/embeddings.h"
#include "entailkg/entail_index.h"
#include "entailkg/graph.h"

namespace oracle {

using entailkg::NodeId;
using entailkg::RelationId;
using Real = long double;

Real cosine(std::span<const float> a, std::span<const float> b);

// Decoder parameters widened to long double, same layouts as DecoderParams.
struct Model {
    std::size_t n = 0, relations = 0, d = 0, kernels = 0, width = 0;
    bool centered = false;
    std::vector<Real> entity, relation, kernel, projection;

    static Model from(const entailkg::DecoderParams& p);
    std::vector<Real>& tensor(int which);  // 0 entity, 1 relation, 2 kernel, 3 projection
    const std::vector<Real>& tensor(int which) const;
};

// K x d feature map, written as the literal double sum over taps.
std::vector<Real> conv(const Model& m, std::span<const Real> head, std::span<const Real> rel);

struct Forward {
    std::vector<Real> pre;     // projection output before ReLU
    std::vector<Real> logits;  // one per entity
};
Forward forward(const Model& m, NodeId h, RelationId r);

Real sigmoid(Real x);
// -(1/N) sum t log p + (1 - t) log(1 - p), p = sigmoid(logit).
Real bce(std::span<const Real> logits, std::span<const double> labels);
Real bce_probabilities(std::span<const double> p, std::span<const double> t);

// Multi-hot train tails of (h, r) built by scanning the train split.
std::vector<double> labels(const entailkg::Graph& g, NodeId h, RelationId r);

struct Member {
    NodeId label_head;   // whose train tails form the target
    NodeId scored_head;  // whose entity row is fed to the decoder
    RelationId relation;
};
// Mean over members of bce(forward(scored_head, r), labels(label_head, r)).
Real triplet_loss(const Model& m, const entailkg::Graph& g, std::span<const Member> batch);

Real contrast_loss(const Model& m, std::span<const NodeId> heads, std::span<const NodeId> positives, Real temperature,
                   bool cosine_similarity);

// Smallest |pre-activation| over the members' forward passes.
Real min_abs_pre(const Model& m, std::span<const Member> batch);
// ReLU on/off pattern over the members' forward passes.
std::vector<bool> relu_pattern(const Model& m, std::span<const Member> batch);

// Scalar Adam on f(theta) = theta^2.
std::vector<double> adam_on_square(double theta0, double lr, double b1, double b2, double eps, int steps);

// Rank of gold after sorting candidates by descending score, gold last among ties.
std::size_t rank_by_sorting(std::span<const double> scores, NodeId gold, std::span<const NodeId> excluded);

struct Metrics {
    double mrr = 0.0, hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
};
Metrics metrics(std::span<const std::size_t> ranks);

// Top-k by cosine via an all-pairs double loop; ties broken by ascending id.
std::vector<std::vector<entailkg::EntailNeighbor>> brute_force_index(const entailkg::EmbeddingMatrix& emb,
                                                                     std::size_t k,
                                                                     std::span<const NodeId> candidates = {});

// Coverage by set enumeration: eval nodes found in some train node's first k entries.
double coverage(const entailkg::EntailIndex& index, std::span<const NodeId> train_nodes,
                std::span<const NodeId> eval_nodes, std::size_t k);

}  // namespace oracle

namespace oracle {

// |a - b| / max(|a|, |b|, floor). The floor keeps components that are zero
// up to rounding from dominating the comparison.
double relative_error(double a, double b, double floor);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t compared = 0;
    bool kink_crossed = false;  // a finite-difference probe flipped a ReLU
};

// Central differences of loss(model) in long double for every entry of the
// selected tensors (bit i of tensor_mask selects Model::tensor(i)), compared
// with the analytic gradient. `pattern` (optional) detects ReLU flips.
GradCheck finite_difference_check(const entailkg::DecoderParams& p, const entailkg::Gradients& analytic,
                                  const std::function<Real(const Model&)>& loss, Real eps, double floor,
                                  unsigned tensor_mask = 0xF,
                                  const std::function<std::vector<bool>(const Model&)>& pattern = {});

}  // namespace oracle
