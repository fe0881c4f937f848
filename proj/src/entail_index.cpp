#include "entailkg/entail_index.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "entailkg/binio.h"
#include "entailkg/errors.h"
#include "entailkg/parallel.h"

namespace entailkg {

namespace {

constexpr std::string_view kIndexMagic = "EKGI";
constexpr std::uint16_t kIndexVersion = 1;
constexpr std::size_t kQueryBlock = 16;

bool ranks_before(const EntailNeighbor& a, const EntailNeighbor& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
}

}  // namespace

EntailIndex::EntailIndex(std::size_t node_count, std::size_t k_max, std::vector<EntailNeighbor> entries)
    : node_count_(node_count), k_max_(k_max), entries_(std::move(entries)) {
    if (entries_.size() != node_count_ * k_max_) {
        throw std::invalid_argument("entail index: expected " + std::to_string(node_count_ * k_max_) +
                                    " entries, got " + std::to_string(entries_.size()));
    }
}

std::span<const EntailNeighbor> EntailIndex::top(NodeId v, std::size_t k) const {
    if (k > k_max_) {
        throw std::invalid_argument("entail index: k=" + std::to_string(k) + " exceeds k_max=" +
                                    std::to_string(k_max_));
    }
    return neighbors(v).first(k);
}

EntailIndex EntailIndex::truncated(std::size_t k) const {
    if (k == 0 || k > k_max_) throw std::invalid_argument("entail index: invalid truncation k");
    std::vector<EntailNeighbor> out;
    out.reserve(node_count_ * k);
    for (NodeId v = 0; v < node_count_; ++v) {
        const auto list = top(v, k);
        out.insert(out.end(), list.begin(), list.end());
    }
    return EntailIndex(node_count_, k, std::move(out));
}

EntailIndex build_index(const EmbeddingMatrix& emb, std::size_t k_max, const IndexBuildOptions& options) {
    if (!emb.normalized()) throw std::invalid_argument("build_index: embeddings must be normalized");
    const std::size_t n = emb.rows();
    const std::size_t dim = emb.dim();

    std::vector<NodeId> candidates = options.restrict_to;
    if (candidates.empty()) {
        candidates.resize(n);
        for (NodeId i = 0; i < n; ++i) candidates[i] = i;
    } else {
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        if (candidates.back() >= n) throw std::invalid_argument("build_index: restrict_to id out of range");
    }
    if (k_max == 0) throw std::invalid_argument("build_index: k_max must be at least 1");
    if (k_max >= candidates.size()) {
        throw std::invalid_argument("build_index: k_max=" + std::to_string(k_max) +
                                    " must be smaller than the candidate set size " +
                                    std::to_string(candidates.size()));
    }
    if (k_max > std::numeric_limits<std::uint16_t>::max()) {
        throw std::invalid_argument("build_index: k_max exceeds the index file limit");
    }

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = l2_norm(emb.row(i));

    std::vector<EntailNeighbor> entries(n * k_max);
    const std::size_t blocks = (n + kQueryBlock - 1) / kQueryBlock;
    parallel_chunks(blocks, options.threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<float> scores(kQueryBlock * candidates.size());
        std::vector<EntailNeighbor> pool;
        pool.reserve(candidates.size());
        for (std::size_t block = begin; block < end; ++block) {
            const std::size_t q0 = block * kQueryBlock;
            const std::size_t q1 = std::min(n, q0 + kQueryBlock);
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                const auto u = candidates[c];
                const float* row_u = emb.row(u).data();
                for (std::size_t q = q0; q < q1; ++q) {
                    const float* row_q = emb.row(q).data();
                    double dot = 0.0;
                    for (std::size_t j = 0; j < dim; ++j) {
                        dot += static_cast<double>(row_q[j]) * static_cast<double>(row_u[j]);
                    }
                    const double s = std::clamp(dot / (norms[q] * norms[u]), -1.0, 1.0);
                    scores[(q - q0) * candidates.size() + c] = static_cast<float>(s);
                }
            }
            for (std::size_t q = q0; q < q1; ++q) {
                pool.clear();
                for (std::size_t c = 0; c < candidates.size(); ++c) {
                    if (candidates[c] == q) continue;
                    pool.push_back({candidates[c], scores[(q - q0) * candidates.size() + c]});
                }
                std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k_max), pool.end(),
                                  ranks_before);
                std::copy_n(pool.begin(), k_max, entries.begin() + static_cast<std::ptrdiff_t>(q * k_max));
            }
        }
    });
    return EntailIndex(n, k_max, std::move(entries));
}

double coverage_at_k(const EntailIndex& index, std::span<const NodeId> train_nodes,
                     std::span<const NodeId> eval_nodes, std::size_t k) {
    if (eval_nodes.empty()) throw std::invalid_argument("coverage_at_k: eval node set is empty");
    if (k == 0 || k > index.k_max()) {
        throw std::invalid_argument("coverage_at_k: k=" + std::to_string(k) + " outside [1, k_max=" +
                                    std::to_string(index.k_max()) + "]");
    }
    std::vector<std::uint8_t> covered(index.node_count(), 0);
    for (NodeId t : train_nodes) {
        if (t >= index.node_count()) throw std::invalid_argument("coverage_at_k: train node out of range");
        for (const auto& nb : index.top(t, k)) covered[nb.node] = 1;
    }
    std::size_t hits = 0;
    for (NodeId v : eval_nodes) {
        if (v >= index.node_count()) throw std::invalid_argument("coverage_at_k: eval node out of range");
        hits += covered[v];
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(eval_nodes.size());
}

void save_index(const EntailIndex& index, std::ostream& out) {
    binio::write_magic(out, kIndexMagic);
    binio::write<std::uint16_t>(out, kIndexVersion);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(index.node_count()));
    binio::write<std::uint16_t>(out, static_cast<std::uint16_t>(index.k_max()));
    for (NodeId v = 0; v < index.node_count(); ++v) {
        for (const auto& nb : index.neighbors(v)) {
            binio::write<std::uint32_t>(out, nb.node);
            binio::write<float>(out, nb.score);
        }
    }
}

void save_index(const EntailIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    save_index(index, out);
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

EntailIndex load_index(std::istream& in) {
    binio::Reader r(in, "entail index");
    r.expect_magic(kIndexMagic);
    r.expect_version(kIndexVersion);
    const std::size_t n = r.read<std::uint32_t>();
    const std::size_t k_max = r.read<std::uint16_t>();
    std::vector<EntailNeighbor> entries(n * k_max);
    for (auto& e : entries) {
        e.node = r.read<std::uint32_t>();
        e.score = r.read<float>();
        if (e.node >= n) throw FormatError("entail index: neighbor id out of range");
        if (!(e.score >= -1.0f && e.score <= 1.0f)) throw FormatError("entail index: score outside [-1, 1]");
    }
    if (!r.at_end()) throw FormatError("entail index: trailing bytes after entries");
    return EntailIndex(n, k_max, std::move(entries));
}

EntailIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return load_index(in);
}

}  // namespace entailkg
