#include "entailkg/eval.h"

#include <stdexcept>

#include "entailkg/parallel.h"

namespace entailkg {

const char* to_string(Setting s) {
    switch (s) {
        case Setting::general: return "general";
        case Setting::transductive: return "transductive";
        case Setting::inductive: return "inductive";
    }
    return "?";
}

const char* to_string(RankMode m) { return m == RankMode::raw ? "raw" : "filtered"; }

const char* to_string(Scoring s) { return s == Scoring::entail_averaged ? "entail-averaged" : "plain"; }

Setting parse_setting(std::string_view name) {
    if (name == "general") return Setting::general;
    if (name == "transductive") return Setting::transductive;
    if (name == "inductive") return Setting::inductive;
    throw std::invalid_argument("unknown setting '" + std::string(name) + "' (general, transductive, inductive)");
}

RankMode parse_rank_mode(std::string_view name) {
    if (name == "filtered") return RankMode::filtered;
    if (name == "raw") return RankMode::raw;
    throw std::invalid_argument("unknown rank mode '" + std::string(name) + "' (filtered, raw)");
}

std::size_t rank_of(std::span<const double> scores, NodeId gold, std::span<const NodeId> excluded) {
    if (gold >= scores.size()) {
        throw std::invalid_argument("rank_of: gold id " + std::to_string(gold) + " outside " +
                                    std::to_string(scores.size()) + " scores");
    }
    const double s = scores[gold];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != gold && scores[j] >= s) ++rank;
    }
    for (NodeId x : excluded) {
        if (x == gold) throw std::invalid_argument("rank_of: gold is in the excluded set");
        if (x >= scores.size()) throw std::invalid_argument("rank_of: excluded id out of range");
        if (scores[x] >= s) --rank;
    }
    return rank;
}

double EvalReport::hits_at(std::size_t n) const {
    for (std::size_t i = 0; i < kHitsAt.size(); ++i)
        if (kHitsAt[i] == n) return hits[i];
    throw std::invalid_argument("hits_at: only 1, 3 and 10 are reported");
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["label"] = label;
    j["split"] = to_string(split);
    j["setting"] = to_string(setting);
    j["mode"] = to_string(mode);
    j["scoring"] = to_string(scoring);
    j["both_directions"] = both_directions;
    j["query_count"] = query_count;
    j["mrr"] = mrr;
    nlohmann::ordered_json h;
    for (std::size_t i = 0; i < kHitsAt.size(); ++i) h[std::to_string(kHitsAt[i])] = hits[i];
    j["hits"] = h;
    j["ranks"] = ranks;
    return j;
}

void aggregate(EvalReport& report, std::vector<std::size_t> ranks) {
    if (ranks.empty()) throw std::invalid_argument("aggregate: no queries to evaluate");
    double reciprocal = 0.0;
    std::array<std::size_t, kHitsAt.size()> within{};
    for (std::size_t r : ranks) {
        if (r == 0) throw std::invalid_argument("aggregate: ranks start at 1");
        reciprocal += 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < kHitsAt.size(); ++i) within[i] += r <= kHitsAt[i];
    }
    const auto q = static_cast<double>(ranks.size());
    report.query_count = ranks.size();
    report.mrr = reciprocal / q;
    for (std::size_t i = 0; i < kHitsAt.size(); ++i) report.hits[i] = static_cast<double>(within[i]) / q;
    report.ranks = std::move(ranks);
}

EvalReport aggregate(std::vector<std::size_t> ranks) {
    EvalReport report;
    aggregate(report, std::move(ranks));
    return report;
}

std::vector<EvalQuery> build_queries(const Graph& g, Split split, Setting setting) {
    std::vector<EvalQuery> out;
    const auto triplets = g.split(split);
    out.reserve(2 * triplets.size());
    for (const auto& t : triplets) {
        const bool unseen = g.is_inductive(t.head) || g.is_inductive(t.tail);
        if (setting == Setting::inductive && !unseen) continue;
        if (setting == Setting::transductive && unseen) continue;
        out.push_back({t.head, t.relation, t.tail});
        out.push_back({t.tail, g.inverse(t.relation), t.head});
    }
    return out;
}

std::vector<std::size_t> rank_queries(std::span<const EvalQuery> queries, const QueryScorer& scorer,
                                      const LabelIndex* filter, unsigned threads) {
    std::vector<std::size_t> ranks(queries.size());
    parallel_chunks(queries.size(), threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<NodeId> excluded;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& q = queries[i];
            const auto scores = scorer(q);
            excluded.clear();
            if (filter) {
                for (NodeId t : filter->tails(q.head, q.relation))
                    if (t != q.gold) excluded.push_back(t);
            }
            ranks[i] = rank_of(scores, q.gold, excluded);
        }
    });
    return ranks;
}

EvalReport evaluate(const Graph& g, const DecoderParams& params, Split split, const EvalOptions& options) {
    if (split == Split::train) throw std::invalid_argument("evaluate: choose the valid or test split");
    const bool averaged = options.scoring == Scoring::entail_averaged;
    if (averaged) {
        if (options.index == nullptr) throw std::invalid_argument("evaluate: entail-averaged scoring needs an index");
        if (options.index->node_count() != g.node_count()) {
            throw std::invalid_argument("evaluate: index covers " + std::to_string(options.index->node_count()) +
                                        " nodes, graph has " + std::to_string(g.node_count()));
        }
    }
    const auto queries = build_queries(g, split, options.setting);
    if (queries.empty()) {
        throw std::invalid_argument(std::string("evaluate: no ") + to_string(options.setting) + " queries in the " +
                                    to_string(split) + " split");
    }
    std::optional<LabelIndex> filter;
    if (options.mode == RankMode::filtered) filter = LabelIndex::all_splits(g);

    QueryScorer scorer = [&](const EvalQuery& q) {
        auto p = score_all(params, q.head, q.relation);
        if (!averaged) return p;
        const NodeId entailed = options.index->top(q.head, 1)[0].node;
        const auto s = score_all(params, entailed, q.relation);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = (p[i] + s[i]) / 2.0;
        return p;
    };

    EvalReport report;
    report.label = options.label;
    report.split = split;
    report.setting = options.setting;
    report.mode = options.mode;
    report.scoring = options.scoring;
    aggregate(report, rank_queries(queries, scorer, filter ? &*filter : nullptr, options.threads));
    return report;
}

}  // namespace entailkg
