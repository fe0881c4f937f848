#pragma once

#include <functional>
#include <string>
#include <vector>

#include "entailkg/config.h"
#include "entailkg/eval.h"
#include "entailkg/trainer.h"

namespace entailkg {

struct SweepGrid {
    std::vector<double> gamma1;
    std::vector<std::size_t> k1;
    std::vector<double> gamma2;
    std::vector<std::size_t> k2;
};

struct SweepPoint {
    double gamma1 = 0.0;
    std::size_t k1 = 0;
    double gamma2 = 0.0;
    std::size_t k2 = 0;
};

// Cartesian product ordered lexicographically by (gamma1, k1, gamma2, k2)
// in the order the values were listed. Throws when any axis is empty.
std::vector<SweepPoint> expand(const SweepGrid& grid);

std::string sweep_label(const SweepPoint& p);

struct SweepSpec {
    TrainConfig base;
    SweepGrid grid;
    Split split = Split::test;
    Setting setting = Setting::general;
    RankMode mode = RankMode::filtered;
};

// Grid file: `gamma1`, `k1`, `gamma2`, `k2` take comma-separated lists
// (missing axes fall back to the single base value); `eval_split`,
// `eval_setting` and `eval_mode` pick the reported evaluation; any other
// key overrides the base training config.
SweepSpec parse_sweep_spec(const KeyValueConfig& kv);

struct SweepRow {
    SweepPoint point;
    std::string label;
    EvalReport report;
};

// Trains one model per grid point from the same seed and evaluates it.
std::vector<SweepRow> run_sweep(const Graph& g, const EntailIndex* index, const SweepSpec& spec,
                                const std::function<void(const SweepRow&)>& on_row = {});

// Header: gamma1,k1,gamma2,k2,label,MRR,Hits@1,Hits@3,Hits@10 (metrics in percent).
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace entailkg
