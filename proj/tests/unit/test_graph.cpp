#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "entailkg/errors.h"
#include "entailkg/graph.h"

using namespace entailkg;

namespace {

Graph from_text(const std::string& train, const std::string& valid, const std::string& test,
                IngestReport* report = nullptr) {
    std::istringstream a(train), b(valid), c(test);
    return ingest(a, b, c, report);
}

std::string serialize(const Graph& g) {
    std::ostringstream out;
    save_graph(g, out);
    return out.str();
}

}  // namespace

TEST_CASE("ingest assigns ids in first-appearance order and materializes inverses") {
    const auto g = from_text("a\tr\tb\nb\tr\tc\n", "c\tr\ta\n", "a\tr\td\n");
    CHECK(g.node_count() == 4);
    CHECK(g.relation_count() == 1);
    CHECK(g.relation_count_with_inverses() == 2);
    CHECK(g.find_node("a") == NodeId{0});
    CHECK(g.find_node("b") == NodeId{1});
    CHECK(g.find_node("c") == NodeId{2});
    CHECK(g.find_node("d") == NodeId{3});
    CHECK(g.train().size() == 2);
    CHECK(g.valid().size() == 1);
    CHECK(g.test().size() == 1);
    CHECK(g.inverse(0) == 1);
    CHECK(g.inverse(g.inverse(0)) == 0);
    CHECK(g.is_inverse(1));
    CHECK(g.relation_text(1) == "r^-1");
    CHECK(g.inductive_nodes() == std::vector<NodeId>{3});
}

TEST_CASE("a valid-only node is inductive") {
    const auto g = from_text("a\tr\tb\n", "a\tr\tz\n", "b\tr\ta\n");
    const auto z = *g.find_node("z");
    CHECK(g.is_inductive(z));
    CHECK_FALSE(g.in_train(z));
    CHECK(g.inductive_nodes(Split::valid) == std::vector<NodeId>{z});
    CHECK(g.inductive_nodes(Split::test).empty());
}

TEST_CASE("wrong field count is a parse error naming the line") {
    try {
        from_text("a\tr\tb\na\tr\n", "", "");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("expected 3 tab-separated fields, found 2") != std::string::npos);
    }
}

TEST_CASE("empty train split is rejected") {
    CHECK_THROWS_AS(from_text("", "a\tr\tb\n", ""), InputError);
    CHECK_THROWS_AS(from_text("\n\n", "", ""), InputError);
}

TEST_CASE("duplicates and eval triplets already in train are dropped and counted") {
    IngestReport report;
    const auto g = from_text("a\tr\tb\na\tr\tb\nb\tr\tc\n", "a\tr\tb\nc\tr\ta\n", "", &report);
    CHECK(g.train().size() == 2);
    CHECK(g.valid().size() == 1);
    CHECK(report.duplicates_dropped == 1);
    CHECK(report.eval_overlap_dropped == 1);
}

TEST_CASE("node text is case preserved and matched exactly") {
    const auto g = from_text("Go home\tr\tgo home\n", "", "");
    CHECK(g.node_count() == 2);
}

TEST_CASE("graph constructor enforces its invariants") {
    CHECK_THROWS_AS(Graph({"a"}, {"r"}, {{0, 0, 1}}, {}, {}), InputError);           // unknown node
    CHECK_THROWS_AS(Graph({"a", "b"}, {"r"}, {{0, 1, 1}}, {}, {}), InputError);      // inverse id in a split
    CHECK_THROWS_AS(Graph({"a", "b"}, {"r"}, {{0, 0, 1}}, {{0, 0, 1}}, {}), InputError);  // train/valid overlap
    CHECK_NOTHROW(Graph({"a"}, {"r"}, {{0, 0, 0}}, {}, {}));                          // self loop is legal
}

TEST_CASE("TSV round trip preserves ids and triplets") {
    const auto g = from_text("x\tp\ty\ny\tq\tz\nz\tp\tx\n", "x\tq\tw\n", "w\tp\ty\n");
    std::ostringstream tr, va, te;
    write_tsv(g, Split::train, tr);
    write_tsv(g, Split::valid, va);
    write_tsv(g, Split::test, te);
    const auto h = from_text(tr.str(), va.str(), te.str());
    CHECK(h.nodes() == g.nodes());
    CHECK(h.relations() == g.relations());
    CHECK(std::ranges::equal(h.train(), g.train()));
    CHECK(std::ranges::equal(h.valid(), g.valid()));
    CHECK(std::ranges::equal(h.test(), g.test()));
}

TEST_CASE("binary serialization is deterministic and round-trips") {
    const std::string train = "x\tp\ty\ny\tq\tz\nz\tp\tx\n";
    const auto g1 = from_text(train, "x\tq\tw\n", "");
    const auto g2 = from_text(train, "x\tq\tw\n", "");
    const auto bytes = serialize(g1);
    CHECK(bytes == serialize(g2));
    std::istringstream in(bytes);
    const auto back = load_graph(in);
    CHECK(serialize(back) == bytes);
    CHECK(back.inductive_nodes() == g1.inductive_nodes());
}

TEST_CASE("corrupt graph files raise format errors") {
    const auto g = from_text("a\tr\tb\n", "", "");
    const auto bytes = serialize(g);
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_graph(truncated), FormatError);
    std::istringstream magic("XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(load_graph(magic), FormatError);
    std::istringstream trailing(bytes + "!");
    CHECK_THROWS_AS(load_graph(trailing), FormatError);
}

TEST_CASE("inverse triplets are the transpose of the train split") {
    const auto g = from_text("a\tr\tb\nb\ts\tc\nc\tr\ta\n", "", "");
    const auto all = g.with_inverses(Split::train);
    std::set<Triplet> forward(g.train().begin(), g.train().end());
    std::set<Triplet> inverse;
    for (const auto& t : all)
        if (g.is_inverse(t.relation)) inverse.insert(t);
    CHECK(inverse.size() == forward.size());
    for (const auto& t : forward) CHECK(inverse.count({t.tail, g.inverse(t.relation), t.head}) == 1);
}

TEST_CASE("degree stats") {
    SUBCASE("star graph: four edges into one sink") {
        const auto g = from_text("a\tr\ts\nb\tr\ts\nc\tr\ts\nd\tr\ts\n", "", "");
        const auto st = degree_stats(g);
        CHECK(st.avg_in_degree == doctest::Approx(4.0));
        CHECK(st.node_count == 5);
        CHECK(st.relation_count == 1);
        CHECK(st.unseen_pct == 0.0);
    }
    SUBCASE("unseen percentage") {
        const auto g = from_text("a\tr\tb\n", "a\tr\tc\n", "d\tr\tb\n");
        CHECK(degree_stats(g).unseen_pct == doctest::Approx(50.0));
        CHECK(degree_stats(g).avg_in_degree == doctest::Approx(1.0));
    }
}

TEST_CASE("split names parse") {
    CHECK(parse_split("valid") == Split::valid);
    CHECK(std::string(to_string(Split::test)) == "test");
    CHECK_THROWS(parse_split("dev"));
}
