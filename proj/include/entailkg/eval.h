#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entailkg/decoder.h"
#include "entailkg/entail_index.h"
#include "entailkg/graph.h"
#include "entailkg/losses.h"

namespace entailkg {

// general: every query; transductive: both endpoints seen in train;
// inductive: at least one endpoint never seen in train.
enum class Setting : std::uint8_t { general, transductive, inductive };
// filtered: other known-true tails (train, valid and test) do not compete.
enum class RankMode : std::uint8_t { filtered, raw };
// entail_averaged: mean of the head's score and its top-1 entailed node's score.
enum class Scoring : std::uint8_t { plain, entail_averaged };

const char* to_string(Setting s);
const char* to_string(RankMode m);
const char* to_string(Scoring s);
Setting parse_setting(std::string_view name);
RankMode parse_rank_mode(std::string_view name);

// 1 + number of non-excluded candidates other than gold scoring at least
// as high as gold (ties count against gold).
std::size_t rank_of(std::span<const double> scores, NodeId gold, std::span<const NodeId> excluded);

inline constexpr std::array<std::size_t, 3> kHitsAt = {1, 3, 10};

struct EvalReport {
    std::string label;
    Split split = Split::test;
    Setting setting = Setting::general;
    RankMode mode = RankMode::filtered;
    Scoring scoring = Scoring::plain;
    bool both_directions = true;
    std::size_t query_count = 0;
    double mrr = 0.0;
    std::array<double, kHitsAt.size()> hits{};  // fractions, aligned with kHitsAt
    std::vector<std::size_t> ranks;

    double hits_at(std::size_t n) const;
    nlohmann::ordered_json to_json() const;
};

// Fills query_count, mrr and hits from ranks. Throws on an empty list or a zero rank.
void aggregate(EvalReport& report, std::vector<std::size_t> ranks);
EvalReport aggregate(std::vector<std::size_t> ranks);

struct EvalQuery {
    NodeId head = 0;
    RelationId relation = 0;
    NodeId gold = 0;
};

// Both directions of every triplet of the split, (h, r, t) and (t, r^-1, h),
// kept according to the setting.
std::vector<EvalQuery> build_queries(const Graph& g, Split split, Setting setting);

using QueryScorer = std::function<std::vector<double>(const EvalQuery&)>;

// Ranks each query's gold tail in the scorer's output. With a filter, the
// filter's other tails of (head, relation) are excluded from competition.
std::vector<std::size_t> rank_queries(std::span<const EvalQuery> queries, const QueryScorer& scorer,
                                      const LabelIndex* filter, unsigned threads = 1);

struct EvalOptions {
    Setting setting = Setting::general;
    RankMode mode = RankMode::filtered;
    Scoring scoring = Scoring::plain;
    const EntailIndex* index = nullptr;  // required for entail_averaged
    unsigned threads = 1;
    std::string label;
};

// Throws std::invalid_argument when the query set is empty.
EvalReport evaluate(const Graph& g, const DecoderParams& params, Split split, const EvalOptions& options = {});

}  // namespace entailkg
