#include <doctest.h>

#include <cmath>

#include "entailkg/eval.h"
#include "entailkg/rng.h"
#include "support/oracles.h"
#include "support/toy_kg.h"

using namespace entailkg;

namespace {

const toy::ToyKg& kg() {
    static const auto k = toy::make_toy_kg();
    return k;
}

DecoderParams toy_params(std::uint64_t seed) {
    return toy::random_params(DecoderShape{kg().graph.node_count(), kg().graph.relation_count_with_inverses(), 6, 2, 3,
                                           Padding::right},
                              seed, 0.5);
}

}  // namespace

TEST_CASE("rank_of: pessimistic ties and exclusions") {
    const std::vector<double> s{0.9, 0.5, 0.7, 0.5, 0.1};
    CHECK(rank_of(s, 0, {}) == 1);
    CHECK(rank_of(s, 2, {}) == 2);
    CHECK(rank_of(s, 1, {}) == 4);  // ties with node 3 count against gold
    CHECK(rank_of(s, 3, {}) == 4);
    const std::vector<NodeId> skip{0, 3};
    CHECK(rank_of(s, 1, skip) == 2);
    CHECK(rank_of(s, 4, {}) == 5);
    CHECK_THROWS_AS(rank_of(s, 5, {}), std::invalid_argument);
    const std::vector<NodeId> self{1};
    CHECK_THROWS_AS(rank_of(s, 1, self), std::invalid_argument);
}

TEST_CASE("rank_of: matches a sort-based oracle on random tables") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(30);
        std::vector<double> s(n);
        for (auto& x : s) x = static_cast<double>(rng.below(8)) / 8.0;  // plenty of ties
        const auto gold = static_cast<NodeId>(rng.below(n));
        std::vector<NodeId> skip;
        for (NodeId j = 0; j < n; ++j)
            if (j != gold && rng.below(4) == 0) skip.push_back(j);
        CHECK(rank_of(s, gold, skip) == oracle::rank_by_sorting(s, gold, skip));
    }
}

TEST_CASE("aggregate: ranks 1, 2, 4") {
    const auto r = aggregate({1, 2, 4});
    CHECK(std::abs(r.mrr - 0.58333333333333333) < 1e-12);
    CHECK(r.hits_at(1) == doctest::Approx(1.0 / 3));
    CHECK(r.hits_at(3) == doctest::Approx(2.0 / 3));
    CHECK(r.hits_at(10) == 1.0);
    CHECK(r.query_count == 3);
    CHECK_THROWS_AS(r.hits_at(5), std::invalid_argument);
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate({1, 0}), std::invalid_argument);
}

TEST_CASE("aggregate: matches the oracle on random rank lists") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> ranks(1 + rng.below(50));
        for (auto& r : ranks) r = 1 + rng.below(20);
        const auto ref = oracle::metrics(ranks);
        const auto got = aggregate(ranks);
        CHECK(std::abs(got.mrr - ref.mrr) < 1e-12);
        CHECK(got.hits[0] == ref.hits1);
        CHECK(got.hits[1] == ref.hits3);
        CHECK(got.hits[2] == ref.hits10);
    }
}

TEST_CASE("build_queries: both directions and settings partition") {
    const auto& g = kg().graph;
    const auto all = build_queries(g, Split::test, Setting::general);
    REQUIRE(all.size() == 2 * g.test().size());
    for (std::size_t i = 0; i < g.test().size(); ++i) {
        const auto& t = g.test()[i];
        CHECK(all[2 * i].head == t.head);
        CHECK(all[2 * i].gold == t.tail);
        CHECK(all[2 * i].relation == t.relation);
        CHECK(all[2 * i + 1].head == t.tail);
        CHECK(all[2 * i + 1].gold == t.head);
        CHECK(all[2 * i + 1].relation == g.inverse(t.relation));
    }
    const auto ind = build_queries(g, Split::test, Setting::inductive);
    const auto tra = build_queries(g, Split::test, Setting::transductive);
    CHECK(ind.size() + tra.size() == all.size());
    CHECK(ind.size() == all.size());  // every toy test head is held out
}

TEST_CASE("rank_queries: perfect scorer and monotone transforms") {
    const auto& g = kg().graph;
    const auto queries = build_queries(g, Split::valid, Setting::general);
    const auto filter = LabelIndex::all_splits(g);
    const QueryScorer perfect = [&](const EvalQuery& q) {
        std::vector<double> s(g.node_count(), 0.0);
        s[q.gold] = 1.0;
        return s;
    };
    for (auto r : rank_queries(queries, perfect, &filter)) CHECK(r == 1);

    const auto params = toy_params(1);
    const QueryScorer base = [&](const EvalQuery& q) { return score_logits(params, q.head, q.relation); };
    const QueryScorer squashed = [&](const EvalQuery& q) {
        auto s = score_logits(params, q.head, q.relation);
        for (auto& x : s) x = 3.0 * x + 1.0;
        return s;
    };
    CHECK(rank_queries(queries, base, &filter) == rank_queries(queries, squashed, &filter));
    CHECK(rank_queries(queries, base, &filter, 1) == rank_queries(queries, base, &filter, 3));
}

TEST_CASE("evaluate: filtered ranks never exceed raw ranks") {
    const auto params = toy_params(2);
    EvalOptions opts;
    const auto filtered = evaluate(kg().graph, params, Split::test, opts);
    opts.mode = RankMode::raw;
    const auto raw = evaluate(kg().graph, params, Split::test, opts);
    REQUIRE(filtered.ranks.size() == raw.ranks.size());
    bool strictly = false;
    for (std::size_t i = 0; i < raw.ranks.size(); ++i) {
        CHECK(filtered.ranks[i] <= raw.ranks[i]);
        strictly = strictly || filtered.ranks[i] < raw.ranks[i];
    }
    CHECK(strictly);
    CHECK(filtered.mrr >= raw.mrr);
}

TEST_CASE("evaluate: argument checks") {
    const auto params = toy_params(3);
    CHECK_THROWS_AS(evaluate(kg().graph, params, Split::train), std::invalid_argument);
    EvalOptions opts;
    opts.setting = Setting::transductive;
    CHECK_THROWS_AS(evaluate(kg().graph, params, Split::test, opts), std::invalid_argument);
    opts = {};
    opts.scoring = Scoring::entail_averaged;
    CHECK_THROWS_AS(evaluate(kg().graph, params, Split::test, opts), std::invalid_argument);
    const auto small = build_index(normalize(EmbeddingMatrix(5, 2, std::vector<float>(10, 1.0f))), 2);
    opts.index = &small;
    CHECK_THROWS_AS(evaluate(kg().graph, params, Split::test, opts), std::invalid_argument);
}

TEST_CASE("evaluate: entail-averaged scoring equals plain scoring for duplicated rows") {
    const auto& g = kg().graph;
    const std::size_t n = g.node_count(), d = 4;
    Rng rng(5);
    std::vector<float> emb(n * d);
    auto params = toy_params(4);
    const std::size_t pd = params.shape.dim;
    // Nodes 2i and 2i+1 share embedding and decoder rows, so each is the other's top-1.
    for (std::size_t v = 0; v + 1 < n; v += 2) {
        for (std::size_t c = 0; c < d; ++c) emb[v * d + c] = emb[(v + 1) * d + c] = static_cast<float>(rng.uniform01() - 0.5);
        for (std::size_t c = 0; c < pd; ++c) params.entity[(v + 1) * pd + c] = params.entity[v * pd + c];
    }
    REQUIRE(n % 2 == 0);
    const auto index = build_index(normalize(EmbeddingMatrix(n, d, std::move(emb))), 1);
    for (NodeId v = 0; v < n; ++v) REQUIRE(index.neighbors(v)[0].node == (v ^ 1u));

    EvalOptions opts;
    const auto plain = evaluate(g, params, Split::test, opts);
    opts.scoring = Scoring::entail_averaged;
    opts.index = &index;
    const auto averaged = evaluate(g, params, Split::test, opts);
    CHECK(averaged.ranks == plain.ranks);
    CHECK(averaged.mrr == plain.mrr);
    CHECK(averaged.hits == plain.hits);
}

TEST_CASE("EvalReport JSON") {
    auto r = aggregate({1, 2, 4});
    r.label = "baseline";
    const auto j = r.to_json();
    CHECK(j["label"] == "baseline");
    CHECK(j["split"] == "test");
    CHECK(j["setting"] == "general");
    CHECK(j["mode"] == "filtered");
    CHECK(j["query_count"] == 3);
    CHECK(j["ranks"].size() == 3);
    CHECK(j["hits"]["10"] == 1.0);
    CHECK(std::abs(j["mrr"].get<double>() - 0.5833333333333333) < 1e-15);
}

TEST_CASE("setting and mode names round-trip") {
    for (auto s : {Setting::general, Setting::transductive, Setting::inductive}) CHECK(parse_setting(to_string(s)) == s);
    for (auto m : {RankMode::filtered, RankMode::raw}) CHECK(parse_rank_mode(to_string(m)) == m);
    CHECK_THROWS_AS(parse_setting("semi"), std::invalid_argument);
}
