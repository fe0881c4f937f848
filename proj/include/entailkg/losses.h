#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entailkg/decoder.h"
#include "entailkg/entail_index.h"
#include "entailkg/graph.h"
#include "entailkg/rng.h"

namespace entailkg {

// A (head, relation, ?) ranking or training query.
struct Query {
    NodeId head = 0;
    RelationId relation = 0;

    auto operator<=>(const Query&) const = default;
};

// Known tails of every (h, r) over a set of splits, inverse relations included.
class LabelIndex {
public:
    LabelIndex() = default;
    LabelIndex(const Graph& g, std::span<const Split> splits);
    static LabelIndex train_only(const Graph& g);
    static LabelIndex all_splits(const Graph& g);

    std::size_t node_count() const { return node_count_; }
    // Sorted tails of (h, r); empty when the pair is unknown.
    std::span<const NodeId> tails(NodeId h, RelationId r) const;
    // Every known (h, r) pair in ascending order.
    const std::vector<Query>& queries() const { return queries_; }

private:
    static std::uint64_t key(NodeId h, RelationId r) { return (std::uint64_t{h} << 32) | r; }

    std::size_t node_count_ = 0;
    std::unordered_map<std::uint64_t, std::vector<NodeId>> tails_;
    std::vector<Query> queries_;
};

// Multi-hot vector over all N entities of the train tails of (h, r).
std::vector<double> make_labels(const LabelIndex& labels, NodeId h, RelationId r);
std::vector<double> make_labels(const Graph& g, NodeId h, RelationId r);

enum class Similarity : std::uint8_t { cosine = 0, dot = 1 };
const char* to_string(Similarity s);
Similarity parse_similarity(std::string_view name);

struct LossConfig {
    double gamma1 = 0.0;       // weight of the synthetic-triplet loss
    double gamma2 = 0.0;       // weight of the entity-contrast loss
    double temperature = 0.07;
    std::size_t k1 = 5;        // entailed list length for synthetic heads
    std::size_t k2 = 10;       // entailed list length for contrast positives
    Similarity similarity = Similarity::cosine;
    double label_smoothing = 0.0;
};

struct BceResult {
    double loss = 0.0;
    std::vector<double> grad;  // d(loss)/d(logits) = (sigmoid(x) - t) / N
};

// Mean binary cross-entropy over N entities, evaluated from logits in log
// space. Labels must be exactly 0 or 1; smoothing maps t to (1-eps)t + eps/N.
BceResult kvsall_bce(std::span<const double> logits, std::span<const double> labels, double label_smoothing = 0.0);
// Same loss for post-sigmoid probabilities in (0, 1).
double kvsall_bce_from_scores(std::span<const double> scores, std::span<const double> labels);

struct StepOptions {
    double label_smoothing = 0.0;
    double dropout = 0.0;
    std::uint64_t dropout_seed = 0;
    unsigned threads = 1;
};

// Mean over the batch of kvsall_bce(score(scored_heads[i], r_i), labels(h_i, r_i)).
// scored_heads equal to the batch heads gives the original-triplet loss;
// entailed heads give the synthetic-triplet loss. When grads is non-null,
// weight * d(loss)/d(params) is accumulated into it.
double triplet_loss(const DecoderParams& p, const LabelIndex& labels, std::span<const Query> batch,
                    std::span<const NodeId> scored_heads, double weight, Gradients* grads,
                    const StepOptions& options = {});

// Uniform draw from each head's top-k entailed list.
std::vector<NodeId> sample_entailed(const EntailIndex& index, std::span<const NodeId> heads, std::size_t k, Rng& rng);

struct SyntheticLoss {
    double loss = 0.0;
    std::vector<NodeId> entailed_heads;
};

// Scores (h', r, .) with h' sampled from h's top-k1 list against the labels of (h, r).
SyntheticLoss synthetic_loss(const DecoderParams& p, const LabelIndex& labels, const EntailIndex& index,
                             std::span<const Query> batch, std::size_t k1, Rng& rng, double weight = 1.0,
                             Gradients* grads = nullptr, const StepOptions& options = {});

// In-batch InfoNCE over entity rows: head i is pulled toward positives[i]
// and pushed from positives[j], j != i. Gradients touch entity rows only.
double contrast_loss(const DecoderParams& p, std::span<const NodeId> heads, std::span<const NodeId> positives,
                     double temperature, Similarity similarity, double weight = 1.0, Gradients* grads = nullptr);

struct ContrastLoss {
    double loss = 0.0;
    std::vector<NodeId> positives;
};

// Samples positives from each head's top-k2 list, then applies contrast_loss.
ContrastLoss entity_contrast(const DecoderParams& p, std::span<const NodeId> heads, const EntailIndex& index,
                             std::size_t k2, double temperature, Similarity similarity, Rng& rng,
                             double weight = 1.0, Gradients* grads = nullptr);

// l1 + gamma1 * l2 + gamma2 * lc. Throws std::invalid_argument naming a non-finite component.
double combined_loss(double l1, double l2, double lc, const LossConfig& cfg);

}  // namespace entailkg
