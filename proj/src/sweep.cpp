#include "entailkg/sweep.h"

#include <stdexcept>

#include <fmt/format.h>

#include "entailkg/errors.h"

namespace entailkg {

std::vector<SweepPoint> expand(const SweepGrid& grid) {
    if (grid.gamma1.empty() || grid.k1.empty() || grid.gamma2.empty() || grid.k2.empty()) {
        throw std::invalid_argument("sweep grid: every axis needs at least one value");
    }
    std::vector<SweepPoint> out;
    for (double g1 : grid.gamma1)
        for (std::size_t k1 : grid.k1)
            for (double g2 : grid.gamma2)
                for (std::size_t k2 : grid.k2) out.push_back({g1, k1, g2, k2});
    return out;
}

std::string sweep_label(const SweepPoint& p) {
    if (p.gamma1 == 0.0 && p.gamma2 == 0.0) return "w/o entail";
    return fmt::format("gamma1={} k1={} gamma2={} k2={}", p.gamma1, p.k1, p.gamma2, p.k2);
}

SweepSpec parse_sweep_spec(const KeyValueConfig& kv) {
    SweepSpec spec;
    const auto& file = kv.name();
    for (const auto& e : kv.entries()) {
        if (e.key == "gamma1") spec.grid.gamma1 = parse_double_list(e, file);
        else if (e.key == "gamma2") spec.grid.gamma2 = parse_double_list(e, file);
        else if (e.key == "k1" || e.key == "k2") {
            auto& axis = e.key == "k1" ? spec.grid.k1 : spec.grid.k2;
            for (auto v : parse_uint_list(e, file)) axis.push_back(static_cast<std::size_t>(v));
        } else if (e.key == "eval_split" || e.key == "eval_setting" || e.key == "eval_mode") {
            try {
                if (e.key == "eval_split") spec.split = parse_split(e.value);
                else if (e.key == "eval_setting") spec.setting = parse_setting(e.value);
                else spec.mode = parse_rank_mode(e.value);
            } catch (const std::invalid_argument& ex) {
                throw ParseError(file, e.line, ex.what());
            }
        } else if (!apply_train_option(spec.base, e, file)) {
            throw ParseError(file, e.line, "unknown key '" + e.key + "'");
        }
    }
    if (spec.grid.gamma1.empty()) spec.grid.gamma1 = {spec.base.loss.gamma1};
    if (spec.grid.k1.empty()) spec.grid.k1 = {spec.base.loss.k1};
    if (spec.grid.gamma2.empty()) spec.grid.gamma2 = {spec.base.loss.gamma2};
    if (spec.grid.k2.empty()) spec.grid.k2 = {spec.base.loss.k2};
    if (spec.split == Split::train) throw ParseError(file, 0, "eval_split must be valid or test");
    for (const auto& p : expand(spec.grid)) {
        auto cfg = spec.base;
        cfg.loss.gamma1 = p.gamma1;
        cfg.loss.k1 = p.k1;
        cfg.loss.gamma2 = p.gamma2;
        cfg.loss.k2 = p.k2;
        try {
            cfg.validate();
        } catch (const std::invalid_argument& ex) {
            throw ParseError(file, 0, std::string("grid point '") + sweep_label(p) + "': " + ex.what());
        }
    }
    return spec;
}

std::vector<SweepRow> run_sweep(const Graph& g, const EntailIndex* index, const SweepSpec& spec,
                                const std::function<void(const SweepRow&)>& on_row) {
    std::vector<SweepRow> rows;
    for (const auto& p : expand(spec.grid)) {
        auto cfg = spec.base;
        cfg.loss.gamma1 = p.gamma1;
        cfg.loss.k1 = p.k1;
        cfg.loss.gamma2 = p.gamma2;
        cfg.loss.k2 = p.k2;
        auto state = init_training(g, cfg);
        FitHooks hooks;
        const unsigned eval_threads = cfg.threads;
        std::optional<DecoderParams> best;
        if (cfg.eval_every > 0 && !g.valid().empty()) {
            hooks.validate = [&](const DecoderParams& params) {
                EvalOptions options;
                options.threads = eval_threads;
                return evaluate(g, params, Split::valid, options).mrr;
            };
            hooks.on_best = [&](const TrainingState& s) { best = s.params; };
        }
        fit(g, index, cfg, state, hooks);
        SweepRow row{p, sweep_label(p), {}};
        EvalOptions options;
        options.setting = spec.setting;
        options.mode = spec.mode;
        options.threads = eval_threads;
        options.label = row.label;
        row.report = evaluate(g, best ? *best : state.params, spec.split, options);
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "gamma1,k1,gamma2,k2,label,MRR,Hits@1,Hits@3,Hits@10\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},\"{}\",{:.4f},{:.4f},{:.4f},{:.4f}\n", r.point.gamma1, r.point.k1,
                           r.point.gamma2, r.point.k2, r.label, 100.0 * r.report.mrr, 100.0 * r.report.hits[0],
                           100.0 * r.report.hits[1], 100.0 * r.report.hits[2]);
    }
    return out;
}

}  // namespace entailkg
