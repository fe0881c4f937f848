#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace entailkg {

using NodeId = std::uint32_t;
// Ids in [0, |R|) are the relations read from file; id r + |R| is the inverse of r.
using RelationId = std::uint32_t;

struct Triplet {
    NodeId head = 0;
    RelationId relation = 0;
    NodeId tail = 0;

    auto operator<=>(const Triplet&) const = default;
};

enum class Split { train, valid, test };

const char* to_string(Split split);
Split parse_split(std::string_view name);

// Immutable knowledge graph: vocabularies plus the three triplet splits.
// Split triplets hold forward relation ids only; inverse triplets are
// derived on demand.
class Graph {
public:
    Graph(std::vector<std::string> nodes, std::vector<std::string> relations,
          std::vector<Triplet> train, std::vector<Triplet> valid, std::vector<Triplet> test);

    std::size_t node_count() const { return nodes_.size(); }
    // Number of relations read from the files (without inverses).
    std::size_t relation_count() const { return relations_.size(); }
    std::size_t relation_count_with_inverses() const { return 2 * relations_.size(); }

    RelationId inverse(RelationId r) const;
    bool is_inverse(RelationId r) const { return r >= relations_.size(); }

    const std::string& node_text(NodeId id) const { return nodes_.at(id); }
    // Surface text of r; inverse relations are rendered as "<text>^-1".
    std::string relation_text(RelationId r) const;
    std::optional<NodeId> find_node(std::string_view text) const;
    std::optional<RelationId> find_relation(std::string_view text) const;

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<std::string>& relations() const { return relations_; }

    std::span<const Triplet> split(Split s) const;
    std::span<const Triplet> train() const { return train_; }
    std::span<const Triplet> valid() const { return valid_; }
    std::span<const Triplet> test() const { return test_; }

    // Forward triplets of the split followed by their inverses (t, r^-1, h).
    std::vector<Triplet> with_inverses(Split s) const;

    bool in_train(NodeId id) const { return in_train_[id] != 0; }
    bool is_inductive(NodeId id) const { return inductive_[id] != 0; }
    // Nodes touched by at least one train triplet, ascending.
    std::vector<NodeId> train_nodes() const;
    // Nodes touched by valid/test triplets but by no train triplet, ascending.
    std::vector<NodeId> inductive_nodes() const;
    // Inductive nodes appearing in the given evaluation split, ascending.
    std::vector<NodeId> inductive_nodes(Split s) const;

private:
    std::vector<std::string> nodes_;
    std::vector<std::string> relations_;
    std::vector<Triplet> train_, valid_, test_;
    std::unordered_map<std::string, NodeId> node_lookup_;
    std::unordered_map<std::string, RelationId> relation_lookup_;
    std::vector<std::uint8_t> in_train_;
    std::vector<std::uint8_t> inductive_;
};

struct IngestReport {
    std::size_t duplicates_dropped = 0;
    std::size_t eval_overlap_dropped = 0;
};

// Reads three TSV files (head TAB relation TAB tail per line). Ids are
// assigned in first-appearance order scanning train, valid, then test.
Graph ingest(const std::filesystem::path& train, const std::filesystem::path& valid,
             const std::filesystem::path& test, IngestReport* report = nullptr);

// source_names label the streams in error messages.
struct SourceNames {
    std::string train = "train", valid = "valid", test = "test";
};

Graph ingest(std::istream& train, std::istream& valid, std::istream& test,
             IngestReport* report = nullptr, const SourceNames& names = {});

void write_tsv(const Graph& g, Split s, std::ostream& out);
void write_tsv(const Graph& g, Split s, const std::filesystem::path& path);

// Binary serialization ("EKGC").
void save_graph(const Graph& g, std::ostream& out);
void save_graph(const Graph& g, const std::filesystem::path& path);
Graph load_graph(std::istream& in);
Graph load_graph(const std::filesystem::path& path);

struct DegreeStats {
    double avg_in_degree = 0.0;
    std::size_t node_count = 0;
    std::size_t relation_count = 0;
    double unseen_pct = 0.0;
};

DegreeStats degree_stats(const Graph& g);

}  // namespace entailkg
