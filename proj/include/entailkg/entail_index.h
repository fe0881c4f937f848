#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "entailkg/embeddings.h"
#include "entailkg/graph.h"

namespace entailkg {

struct EntailNeighbor {
    NodeId node = 0;
    float score = 0.0f;

    bool operator==(const EntailNeighbor&) const = default;
};

// For every node, its k_max most similar other nodes by cosine, ordered by
// descending score with ties broken by ascending node id.
class EntailIndex {
public:
    EntailIndex() = default;
    EntailIndex(std::size_t node_count, std::size_t k_max, std::vector<EntailNeighbor> entries);

    std::size_t node_count() const { return node_count_; }
    std::size_t k_max() const { return k_max_; }

    std::span<const EntailNeighbor> neighbors(NodeId v) const {
        return {entries_.data() + static_cast<std::size_t>(v) * k_max_, k_max_};
    }
    // First k entries of v's list; k must not exceed k_max.
    std::span<const EntailNeighbor> top(NodeId v, std::size_t k) const;

    EntailIndex truncated(std::size_t k) const;

    bool operator==(const EntailIndex&) const = default;

private:
    std::size_t node_count_ = 0;
    std::size_t k_max_ = 0;
    std::vector<EntailNeighbor> entries_;
};

struct IndexBuildOptions {
    // Candidate neighbors; empty means every node is a candidate.
    std::vector<NodeId> restrict_to;
    unsigned threads = 0;
};

// Exact top-k by cosine over a normalized matrix. Self matches are never
// listed. Throws std::invalid_argument when k_max is not smaller than the
// candidate set.
EntailIndex build_index(const EmbeddingMatrix& emb, std::size_t k_max, const IndexBuildOptions& options = {});

// Percentage of eval_nodes occurring in the top-k list of at least one train node.
double coverage_at_k(const EntailIndex& index, std::span<const NodeId> train_nodes,
                     std::span<const NodeId> eval_nodes, std::size_t k);

// Binary index file ("EKGI"): magic, u16 version, u32 N, u16 k_max, then
// per node k_max (u32 id, f32 score) pairs.
void save_index(const EntailIndex& index, std::ostream& out);
void save_index(const EntailIndex& index, const std::filesystem::path& path);
EntailIndex load_index(std::istream& in);
EntailIndex load_index(const std::filesystem::path& path);

}  // namespace entailkg
