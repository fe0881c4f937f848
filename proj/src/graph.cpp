#include "entailkg/graph.h"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "entailkg/binio.h"
#include "entailkg/errors.h"

namespace entailkg {

namespace {

constexpr std::string_view kGraphMagic = "EKGC";
constexpr std::uint16_t kGraphVersion = 1;

struct TripletHash {
    std::size_t operator()(const Triplet& t) const noexcept {
        std::uint64_t h = t.head;
        h = h * 0x100000001B3ULL ^ t.relation;
        h = h * 0x100000001B3ULL ^ t.tail;
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

std::vector<std::uint8_t> mark_nodes(std::size_t n, std::span<const Triplet> triplets) {
    std::vector<std::uint8_t> seen(n, 0);
    for (const auto& t : triplets) {
        seen[t.head] = 1;
        seen[t.tail] = 1;
    }
    return seen;
}

}  // namespace

const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "valid") return Split::valid;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

Graph::Graph(std::vector<std::string> nodes, std::vector<std::string> relations,
             std::vector<Triplet> train, std::vector<Triplet> valid, std::vector<Triplet> test)
    : nodes_(std::move(nodes)),
      relations_(std::move(relations)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (!node_lookup_.emplace(nodes_[i], i).second) {
            throw InputError("duplicate node text '" + nodes_[i] + "'");
        }
    }
    for (RelationId i = 0; i < relations_.size(); ++i) {
        if (!relation_lookup_.emplace(relations_[i], i).second) {
            throw InputError("duplicate relation text '" + relations_[i] + "'");
        }
    }
    for (auto split : {Split::train, Split::valid, Split::test}) {
        for (const auto& t : this->split(split)) {
            if (t.head >= nodes_.size() || t.tail >= nodes_.size() || t.relation >= relations_.size()) {
                throw InputError(std::string(to_string(split)) + " triplet references an unknown id");
            }
        }
    }
    TripletSet train_set(train_.begin(), train_.end());
    for (auto split : {Split::valid, Split::test}) {
        for (const auto& t : this->split(split)) {
            if (train_set.contains(t)) {
                throw InputError(std::string(to_string(split)) + " split overlaps the train split");
            }
        }
    }

    in_train_ = mark_nodes(nodes_.size(), train_);
    const auto in_valid = mark_nodes(nodes_.size(), valid_);
    const auto in_test = mark_nodes(nodes_.size(), test_);
    inductive_.assign(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        inductive_[i] = !in_train_[i] && (in_valid[i] || in_test[i]);
    }
}

RelationId Graph::inverse(RelationId r) const {
    const auto n = static_cast<RelationId>(relations_.size());
    if (r >= 2 * n) throw std::out_of_range("relation id out of range");
    return r < n ? r + n : r - n;
}

std::string Graph::relation_text(RelationId r) const {
    const auto n = relations_.size();
    if (r < n) return relations_[r];
    return relations_.at(r - n) + "^-1";
}

std::optional<NodeId> Graph::find_node(std::string_view text) const {
    auto it = node_lookup_.find(std::string(text));
    if (it == node_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationId> Graph::find_relation(std::string_view text) const {
    auto it = relation_lookup_.find(std::string(text));
    if (it == relation_lookup_.end()) return std::nullopt;
    return it->second;
}

std::span<const Triplet> Graph::split(Split s) const {
    switch (s) {
        case Split::train: return train_;
        case Split::valid: return valid_;
        case Split::test: return test_;
    }
    return {};
}

std::vector<Triplet> Graph::with_inverses(Split s) const {
    const auto forward = split(s);
    std::vector<Triplet> out(forward.begin(), forward.end());
    out.reserve(2 * forward.size());
    for (const auto& t : forward) out.push_back({t.tail, inverse(t.relation), t.head});
    return out;
}

std::vector<NodeId> Graph::train_nodes() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (in_train_[i]) out.push_back(i);
    return out;
}

std::vector<NodeId> Graph::inductive_nodes() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (inductive_[i]) out.push_back(i);
    return out;
}

std::vector<NodeId> Graph::inductive_nodes(Split s) const {
    const auto touched = mark_nodes(nodes_.size(), split(s));
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (inductive_[i] && touched[i]) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// TSV ingestion

namespace {

struct RawTriplet {
    std::string head, relation, tail;
};

std::vector<RawTriplet> read_tsv(std::istream& in, const std::string& name) {
    std::vector<RawTriplet> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto first = line.find('\t');
        const auto second = first == std::string::npos ? first : line.find('\t', first + 1);
        if (second == std::string::npos || line.find('\t', second + 1) != std::string::npos) {
            const auto fields = std::count(line.begin(), line.end(), '\t') + 1;
            throw ParseError(name, line_no,
                             "expected 3 tab-separated fields, found " + std::to_string(fields));
        }
        rows.push_back({line.substr(0, first), line.substr(first + 1, second - first - 1),
                        line.substr(second + 1)});
    }
    if (in.bad()) throw InputError(name + ": read error");
    return rows;
}

class GraphBuilder {
public:
    NodeId node(const std::string& text) {
        auto [it, inserted] = node_ids_.emplace(text, static_cast<NodeId>(nodes_.size()));
        if (inserted) nodes_.push_back(text);
        return it->second;
    }

    RelationId relation(const std::string& text) {
        auto [it, inserted] = relation_ids_.emplace(text, static_cast<RelationId>(relations_.size()));
        if (inserted) relations_.push_back(text);
        return it->second;
    }

    std::optional<Triplet> lookup(const RawTriplet& raw) const {
        auto h = node_ids_.find(raw.head);
        auto r = relation_ids_.find(raw.relation);
        auto t = node_ids_.find(raw.tail);
        if (h == node_ids_.end() || r == relation_ids_.end() || t == node_ids_.end()) return std::nullopt;
        return Triplet{h->second, r->second, t->second};
    }

    std::vector<std::string> take_nodes() { return std::move(nodes_); }
    std::vector<std::string> take_relations() { return std::move(relations_); }

private:
    std::unordered_map<std::string, NodeId> node_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
    std::vector<std::string> nodes_;
    std::vector<std::string> relations_;
};

}  // namespace

Graph ingest(std::istream& train_in, std::istream& valid_in, std::istream& test_in,
             IngestReport* report, const SourceNames& names) {
    const auto train_rows = read_tsv(train_in, names.train);
    const auto valid_rows = read_tsv(valid_in, names.valid);
    const auto test_rows = read_tsv(test_in, names.test);
    if (train_rows.empty()) throw InputError(names.train + ": file contains no triplets");

    IngestReport local;
    GraphBuilder builder;
    TripletSet train_set;
    std::vector<Triplet> train;
    for (const auto& raw : train_rows) {
        const NodeId h = builder.node(raw.head);
        const RelationId r = builder.relation(raw.relation);
        const NodeId t = builder.node(raw.tail);
        const Triplet tr{h, r, t};
        if (train_set.insert(tr).second) {
            train.push_back(tr);
        } else {
            ++local.duplicates_dropped;
        }
    }

    auto build_eval = [&](const std::vector<RawTriplet>& rows) {
        TripletSet seen;
        std::vector<Triplet> out;
        for (const auto& raw : rows) {
            // A triplet already in train is made only of known texts, so the
            // lookup happens before any new id is handed out.
            if (auto known = builder.lookup(raw); known && train_set.contains(*known)) {
                ++local.eval_overlap_dropped;
                continue;
            }
            const NodeId h = builder.node(raw.head);
            const RelationId r = builder.relation(raw.relation);
            const NodeId t = builder.node(raw.tail);
            const Triplet tr{h, r, t};
            if (seen.insert(tr).second) {
                out.push_back(tr);
            } else {
                ++local.duplicates_dropped;
            }
        }
        return out;
    };
    auto valid = build_eval(valid_rows);
    auto test = build_eval(test_rows);

    if (local.duplicates_dropped > 0) {
        spdlog::info("ingest: dropped {} duplicate triplet(s)", local.duplicates_dropped);
    }
    if (local.eval_overlap_dropped > 0) {
        spdlog::warn("ingest: dropped {} evaluation triplet(s) already present in train",
                     local.eval_overlap_dropped);
    }
    if (report) *report = local;
    return Graph(builder.take_nodes(), builder.take_relations(), std::move(train), std::move(valid),
                 std::move(test));
}

Graph ingest(const std::filesystem::path& train, const std::filesystem::path& valid,
             const std::filesystem::path& test, IngestReport* report) {
    auto open = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw InputError("cannot open '" + p.string() + "'");
        return in;
    };
    auto train_in = open(train);
    auto valid_in = open(valid);
    auto test_in = open(test);
    return ingest(train_in, valid_in, test_in, report, {train.string(), valid.string(), test.string()});
}

void write_tsv(const Graph& g, Split s, std::ostream& out) {
    for (const auto& t : g.split(s)) {
        out << g.node_text(t.head) << '\t' << g.relations()[t.relation] << '\t' << g.node_text(t.tail)
            << '\n';
    }
}

void write_tsv(const Graph& g, Split s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_tsv(g, s, out);
}

// ---------------------------------------------------------------------------
// Binary form

void save_graph(const Graph& g, std::ostream& out) {
    binio::write_magic(out, kGraphMagic);
    binio::write<std::uint16_t>(out, kGraphVersion);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(g.node_count()));
    for (const auto& s : g.nodes()) binio::write_string(out, s);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(g.relation_count()));
    for (const auto& s : g.relations()) binio::write_string(out, s);
    for (auto split : {Split::train, Split::valid, Split::test}) {
        const auto triplets = g.split(split);
        binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(triplets.size()));
        for (const auto& t : triplets) {
            binio::write<std::uint32_t>(out, t.head);
            binio::write<std::uint32_t>(out, t.relation);
            binio::write<std::uint32_t>(out, t.tail);
        }
    }
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    save_graph(g, out);
}

Graph load_graph(std::istream& in) {
    binio::Reader r(in, "graph");
    r.expect_magic(kGraphMagic);
    r.expect_version(kGraphVersion);
    std::vector<std::string> nodes(r.read<std::uint32_t>());
    for (auto& s : nodes) s = r.read_string();
    std::vector<std::string> relations(r.read<std::uint32_t>());
    for (auto& s : relations) s = r.read_string();
    std::vector<Triplet> splits[3];
    for (auto& triplets : splits) {
        triplets.resize(r.read<std::uint32_t>());
        for (auto& t : triplets) {
            t.head = r.read<std::uint32_t>();
            t.relation = r.read<std::uint32_t>();
            t.tail = r.read<std::uint32_t>();
        }
    }
    if (!r.at_end()) throw FormatError("graph: trailing bytes after triplet arrays");
    try {
        return Graph(std::move(nodes), std::move(relations), std::move(splits[0]),
                     std::move(splits[1]), std::move(splits[2]));
    } catch (const InputError& e) {
        throw FormatError(std::string("graph: ") + e.what());
    }
}

Graph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return load_graph(in);
}

DegreeStats degree_stats(const Graph& g) {
    DegreeStats stats;
    stats.node_count = g.node_count();
    stats.relation_count = g.relation_count();
    std::vector<std::uint8_t> has_incoming(g.node_count(), 0);
    for (const auto& t : g.train()) has_incoming[t.tail] = 1;
    const auto sinks = std::count(has_incoming.begin(), has_incoming.end(), 1);
    stats.avg_in_degree = sinks == 0 ? 0.0 : static_cast<double>(g.train().size()) / static_cast<double>(sinks);
    if (g.node_count() > 0) {
        stats.unseen_pct = 100.0 * static_cast<double>(g.inductive_nodes().size()) /
                           static_cast<double>(g.node_count());
    }
    return stats;
}

}  // namespace entailkg
