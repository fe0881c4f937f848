#include "entailkg/cli.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "entailkg/config.h"
#include "entailkg/embeddings.h"
#include "entailkg/entail_index.h"
#include "entailkg/errors.h"
#include "entailkg/eval.h"
#include "entailkg/graph.h"
#include "entailkg/sweep.h"
#include "entailkg/trainer.h"

namespace fs = std::filesystem;

namespace entailkg {

namespace {

class OverwriteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void guard_output(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) {
        throw OverwriteError("'" + path.string() + "' exists; pass --force to overwrite");
    }
}

void require_file(const fs::path& path, std::string_view what) {
    if (!fs::is_regular_file(path)) throw InputError(std::string(what) + " '" + path.string() + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Run directory layout

struct RunDir {
    fs::path root;
    fs::path config() const { return root / "config.txt"; }
    fs::path manifest() const { return root / "run.json"; }
    fs::path metrics() const { return root / "metrics.jsonl"; }
    fs::path checkpoint() const { return root / "checkpoint.ckpt"; }
    fs::path best() const { return root / "best.ckpt"; }
};

struct RunManifest {
    fs::path graph;
    std::optional<fs::path> index;
};

void write_manifest(const RunDir& run, const RunManifest& m) {
    nlohmann::ordered_json j;
    j["graph"] = fs::absolute(m.graph).lexically_normal().string();
    j["index"] = m.index ? nlohmann::ordered_json(fs::absolute(*m.index).lexically_normal().string()) : nullptr;
    write_text(run.manifest(), j.dump(2) + "\n");
}

RunManifest read_manifest(const RunDir& run) {
    require_file(run.manifest(), "run manifest");
    try {
        const auto j = nlohmann::json::parse(read_text(run.manifest()));
        RunManifest m;
        m.graph = j.at("graph").get<std::string>();
        if (!j.at("index").is_null()) m.index = j.at("index").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("run manifest '" + run.manifest().string() + "': " + e.what());
    }
}

// Drops metric lines for epochs beyond the checkpoint so a resumed run
// appends exactly where the checkpoint left off.
void truncate_metrics(const fs::path& path, std::size_t epoch) {
    if (!fs::exists(path)) return;
    std::istringstream in(read_text(path));
    std::string kept, line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t e = 0;
        try {
            e = nlohmann::json::parse(line).at("epoch").get<std::size_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("metrics file '" + path.string() + "': " + ex.what());
        }
        if (e <= epoch) kept += line + "\n";
    }
    write_text(path, kept);
}

std::string run_label(const TrainConfig& cfg, Scoring scoring) {
    std::string label = cfg.uses_entailment()
                            ? fmt::format("entail (gamma1={}, k1={}, gamma2={}, k2={})", cfg.loss.gamma1,
                                          cfg.loss.k1, cfg.loss.gamma2, cfg.loss.k2)
                            : std::string("baseline (w/o entail)");
    if (scoring == Scoring::entail_averaged) label += " + entail-averaged";
    return label;
}

void print_report(std::ostream& out, const EvalReport& r) {
    out << fmt::format("{}: split={} setting={} mode={} scoring={} queries={}\n", r.label, to_string(r.split),
                       to_string(r.setting), to_string(r.mode), to_string(r.scoring), r.query_count);
    out << fmt::format("MRR {:.4f}  Hits@1 {:.4f}  Hits@3 {:.4f}  Hits@10 {:.4f}\n", r.mrr, r.hits[0], r.hits[1],
                       r.hits[2]);
}

std::optional<EntailIndex> load_optional_index(const std::string& path, const Graph& g) {
    if (path.empty()) return std::nullopt;
    require_file(path, "index");
    auto index = load_index(fs::path(path));
    if (index.node_count() != g.node_count()) {
        throw InputError(fmt::format("index '{}' covers {} nodes, graph has {}", path, index.node_count(),
                                     g.node_count()));
    }
    return index;
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
    std::string train, valid, test, out;
    bool force = false;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    for (const auto* p : {&a.train, &a.valid, &a.test}) require_file(*p, "input file");
    guard_output(a.out, a.force);
    IngestReport report;
    const Graph g = ingest(fs::path(a.train), fs::path(a.valid), fs::path(a.test), &report);
    save_graph(g, fs::path(a.out));
    const auto stats = degree_stats(g);
    out << fmt::format("nodes {}\n", stats.node_count);
    out << fmt::format("relations {} ({} with inverses)\n", stats.relation_count, g.relation_count_with_inverses());
    out << fmt::format("triplets train {} valid {} test {}\n", g.train().size(), g.valid().size(), g.test().size());
    out << fmt::format("avg in-degree {:.4f}\n", stats.avg_in_degree);
    out << fmt::format("unseen nodes {} ({:.2f}%)\n", g.inductive_nodes().size(), stats.unseen_pct);
    out << fmt::format("duplicates dropped {}, eval triplets already in train dropped {}\n",
                       report.duplicates_dropped, report.eval_overlap_dropped);
    return exit_ok;
}

int cmd_export_nodes(const std::string& graph_path, const std::string& out_path, bool force, std::ostream& out) {
    require_file(graph_path, "graph");
    guard_output(out_path, force);
    const Graph g = load_graph(fs::path(graph_path));
    std::string text;
    for (const auto& n : g.nodes()) {
        if (n.find('\n') != std::string::npos) throw InputError("node text contains a newline: '" + n + "'");
        text += n + "\n";
    }
    write_text(out_path, text);
    out << fmt::format("wrote {} node texts\n", g.node_count());
    return exit_ok;
}

struct IndexArgs {
    std::string graph, embeddings, out;
    std::size_t k_max = 10;
    bool restrict_train = false;
    bool force = false;
    unsigned threads = 0;
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
    require_file(a.graph, "graph");
    require_file(a.embeddings, "embeddings");
    guard_output(a.out, a.force);
    const Graph g = load_graph(fs::path(a.graph));
    const auto emb = normalize(load_embeddings(fs::path(a.embeddings), g.node_count()));
    IndexBuildOptions options;
    options.threads = a.threads;
    if (a.restrict_train) options.restrict_to = g.train_nodes();
    const auto start = std::chrono::steady_clock::now();
    const auto index = build_index(emb, a.k_max, options);
    const double secs = seconds_since(start);
    save_index(index, fs::path(a.out));
    const std::size_t candidates = a.restrict_train ? options.restrict_to.size() : g.node_count();
    out << fmt::format("indexed {} nodes (d={}, k_max={}, {} candidates) in {:.3f} s, {:.1f} nodes/s\n",
                       g.node_count(), emb.dim(), a.k_max, candidates, secs,
                       secs > 0 ? static_cast<double>(g.node_count()) / secs : 0.0);
    return exit_ok;
}

struct CoverageArgs {
    std::string graph, index, k_list = "1,5,10", split = "valid", csv;
    bool force = false;
};

int cmd_coverage(const CoverageArgs& a, std::ostream& out) {
    require_file(a.graph, "graph");
    require_file(a.index, "index");
    if (!a.csv.empty()) guard_output(a.csv, a.force);
    const Graph g = load_graph(fs::path(a.graph));
    const auto index = *load_optional_index(a.index, g);
    const auto ks = parse_uint_list(a.k_list);
    for (auto k : ks) {
        if (k < 1 || k > index.k_max()) {
            throw InputError(fmt::format("k={} outside [1, {}] (the index's k_max)", k, index.k_max()));
        }
    }
    const auto split = parse_split(a.split);
    const auto eval_nodes = g.inductive_nodes(split);
    if (eval_nodes.empty()) throw InputError(fmt::format("the {} split has no inductive nodes", a.split));
    const auto train_nodes = g.train_nodes();
    std::string csv = "k,coverage_pct\n";
    out << fmt::format("inductive {} nodes: {}\n", a.split, eval_nodes.size());
    for (auto k : ks) {
        const double c = coverage_at_k(index, train_nodes, eval_nodes, k);
        out << fmt::format("k={:<4} coverage {:.2f}%\n", k, c);
        csv += fmt::format("{},{:.4f}\n", k, c);
    }
    if (!a.csv.empty()) write_text(a.csv, csv);
    return exit_ok;
}

struct TrainArgs {
    std::string graph, index, config, run_dir;
    bool force = false;
    bool resume = false;
    std::optional<std::size_t> stop_after;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<bool> bitwise_repro;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const RunDir run{a.run_dir};
    TrainConfig cfg;
    RunManifest manifest;
    if (a.resume) {
        if (!a.config.empty() || a.seed) {
            throw InputError("--config and --seed cannot change when resuming; the run's config snapshot is used");
        }
        require_file(run.config(), "config snapshot");
        require_file(run.checkpoint(), "checkpoint");
        cfg = load_train_config(run.config());
        manifest = read_manifest(run);
        if (!a.graph.empty()) manifest.graph = a.graph;
        if (!a.index.empty()) manifest.index = a.index;
    } else {
        if (a.graph.empty() || a.config.empty()) throw InputError("train needs --graph and --config");
        require_file(a.config, "config");
        cfg = load_train_config(a.config);
        if (a.seed) cfg.seed = *a.seed;
        manifest.graph = a.graph;
        if (!a.index.empty()) manifest.index = a.index;
        for (const auto& p : {run.config(), run.checkpoint(), run.metrics(), run.best(), run.manifest()})
            guard_output(p, a.force);
    }
    if (a.threads) cfg.threads = *a.threads;
    if (a.bitwise_repro) cfg.bitwise_repro = *a.bitwise_repro;
    cfg.validate();

    require_file(manifest.graph, "graph");
    const Graph g = load_graph(manifest.graph);
    const auto index = load_optional_index(manifest.index ? manifest.index->string() : "", g);
    if (cfg.uses_entailment() && !index) throw InputError("gamma1 > 0 or gamma2 > 0 requires --index");

    TrainingState state;
    if (a.resume) {
        state = load_checkpoint(run.checkpoint(), decoder_shape(cfg, g));
        truncate_metrics(run.metrics(), state.epoch);
        spdlog::info("resuming from epoch {}", state.epoch);
    } else {
        fs::create_directories(run.root);
        for (const auto& p : {run.checkpoint(), run.metrics(), run.best()}) fs::remove(p);
        write_text(run.config(), format_train_config(cfg));
        write_manifest(run, manifest);
        state = init_training(g, cfg);
    }

    std::ofstream metrics(run.metrics(), std::ios::app);
    if (!metrics) throw InputError("cannot write '" + run.metrics().string() + "'");

    FitHooks hooks;
    if (cfg.eval_every > 0) {
        if (g.valid().empty()) throw InputError("eval_every > 0 needs a non-empty valid split");
        hooks.validate = [&](const DecoderParams& params) {
            EvalOptions options;
            options.threads = cfg.threads;
            return evaluate(g, params, Split::valid, options).mrr;
        };
        hooks.on_best = [&](const TrainingState& s) { save_checkpoint(s, run.best(), false); };
    }
    hooks.on_epoch = [&](const EpochMetrics& m) {
        metrics << to_json_line(m) << '\n' << std::flush;
        spdlog::info("epoch {} loss {:.6f} (l1 {:.6f} l2 {:.6f} lc {:.6f}){}", m.epoch, m.loss, m.l1, m.l2, m.lc,
                     m.valid_mrr ? fmt::format(" valid MRR {:.4f}", *m.valid_mrr) : "");
    };
    hooks.on_checkpoint = [&](const TrainingState& s) { save_checkpoint(s, run.checkpoint(), true); };

    const auto start = std::chrono::steady_clock::now();
    const auto result = fit(g, index ? &*index : nullptr, cfg, state, hooks, a.stop_after);
    out << fmt::format("ran {} epochs ({} of {} complete) in {:.2f} s{}\n", result.epochs_run, state.epoch,
                       cfg.epochs, seconds_since(start), result.stopped_early ? ", stopped early" : "");
    if (!result.history.empty()) {
        const auto& m = result.history.back();
        out << fmt::format("last epoch loss {:.6f} (l1 {:.6f} l2 {:.6f} lc {:.6f})\n", m.loss, m.l1, m.l2, m.lc);
    }
    if (state.best_epoch > 0) out << fmt::format("best valid MRR {:.4f} at epoch {}\n", state.best_mrr, state.best_epoch);
    return exit_ok;
}

struct EvalArgs {
    std::string run_dir, split = "test", setting = "general", mode = "filtered", entail_index, checkpoint = "auto",
                         out;
    bool entail_averaged = false;
    bool force = false;
    unsigned threads = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const RunDir run{a.run_dir};
    require_file(run.config(), "config snapshot");
    const auto cfg = load_train_config(run.config());
    const auto manifest = read_manifest(run);
    if (!a.out.empty()) guard_output(a.out, a.force);

    fs::path ckpt;
    if (a.checkpoint == "best") ckpt = run.best();
    else if (a.checkpoint == "last") ckpt = run.checkpoint();
    else if (a.checkpoint == "auto") ckpt = fs::exists(run.best()) ? run.best() : run.checkpoint();
    else throw InputError("--checkpoint expects auto, best or last");
    require_file(ckpt, "checkpoint");

    require_file(manifest.graph, "graph");
    const Graph g = load_graph(manifest.graph);
    const auto state = load_checkpoint(ckpt, decoder_shape(cfg, g));

    EvalOptions options;
    options.setting = parse_setting(a.setting);
    options.mode = parse_rank_mode(a.mode);
    options.scoring = a.entail_averaged ? Scoring::entail_averaged : Scoring::plain;
    options.threads = a.threads;
    options.label = run_label(cfg, options.scoring);
    std::optional<EntailIndex> index;
    if (a.entail_averaged) {
        const std::string path = !a.entail_index.empty() ? a.entail_index
                                 : manifest.index       ? manifest.index->string()
                                                        : std::string();
        if (path.empty()) throw InputError("--entail-averaged needs --entail-index (the run has no index)");
        index = load_optional_index(path, g);
        options.index = &*index;
    }
    const auto report = evaluate(g, state.params, parse_split(a.split), options);
    print_report(out, report);
    if (!a.out.empty()) write_text(a.out, report.to_json().dump(2) + "\n");
    return exit_ok;
}

struct SweepArgs {
    std::string graph, index, grid_config, out;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    require_file(a.graph, "graph");
    require_file(a.grid_config, "grid config");
    if (!a.out.empty()) guard_output(a.out, a.force);
    auto spec = parse_sweep_spec(KeyValueConfig::load(a.grid_config));
    if (a.seed) spec.base.seed = *a.seed;
    if (a.threads) spec.base.threads = *a.threads;
    const Graph g = load_graph(fs::path(a.graph));
    const auto index = load_optional_index(a.index, g);
    const bool needs_index = std::any_of(spec.grid.gamma1.begin(), spec.grid.gamma1.end(), [](double v) { return v > 0; }) ||
                             std::any_of(spec.grid.gamma2.begin(), spec.grid.gamma2.end(), [](double v) { return v > 0; });
    if (needs_index && !index) throw InputError("the grid has gamma1 > 0 or gamma2 > 0; pass --index");
    const auto rows = run_sweep(g, index ? &*index : nullptr, spec, [](const SweepRow& r) {
        spdlog::info("{}: MRR {:.4f}", r.label, r.report.mrr);
    });
    const auto csv = sweep_csv(rows);
    out << csv;
    if (!a.out.empty()) write_text(a.out, csv);
    return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("entailkg", sink);
    logger->set_pattern("[%l] %v");
    const auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct Restore {
        std::shared_ptr<spdlog::logger> logger;
        ~Restore() { spdlog::set_default_logger(logger); }
    } restore{previous};

    CLI::App app{"Knowledge-graph completion with entailment densification"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "Read train/valid/test TSV files into a graph file");
    ingest_cmd->add_option("--train", ingest_args.train)->required();
    ingest_cmd->add_option("--valid", ingest_args.valid)->required();
    ingest_cmd->add_option("--test", ingest_args.test)->required();
    ingest_cmd->add_option("--out", ingest_args.out)->required();
    ingest_cmd->add_flag("--force", ingest_args.force);

    std::string export_graph, export_out;
    bool export_force = false;
    auto* export_cmd = app.add_subcommand("export-nodes", "Write node texts one per line in id order");
    export_cmd->add_option("--graph", export_graph)->required();
    export_cmd->add_option("--out", export_out)->required();
    export_cmd->add_flag("--force", export_force);

    IndexArgs index_args;
    auto* index_cmd = app.add_subcommand("index", "Build the top-k entailment index from node embeddings");
    index_cmd->add_option("--graph", index_args.graph)->required();
    index_cmd->add_option("--embeddings", index_args.embeddings)->required();
    index_cmd->add_option("--k-max", index_args.k_max)->required();
    index_cmd->add_flag("--restrict-train", index_args.restrict_train, "only train nodes may be listed");
    index_cmd->add_option("--out", index_args.out)->required();
    index_cmd->add_flag("--force", index_args.force);
    index_cmd->add_option("--threads", index_args.threads, "0 = hardware concurrency");

    CoverageArgs cov_args;
    auto* cov_cmd = app.add_subcommand("coverage", "Share of unseen eval nodes reached by train nodes' lists");
    cov_cmd->add_option("--graph", cov_args.graph)->required();
    cov_cmd->add_option("--index", cov_args.index)->required();
    cov_cmd->add_option("--k-list", cov_args.k_list, "comma-separated k values")->capture_default_str();
    cov_cmd->add_option("--split", cov_args.split)->capture_default_str();
    cov_cmd->add_option("--csv", cov_args.csv);
    cov_cmd->add_flag("--force", cov_args.force);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the decoder into a run directory");
    train_cmd->add_option("--graph", train_args.graph);
    train_cmd->add_option("--index", train_args.index);
    train_cmd->add_option("--config", train_args.config);
    train_cmd->add_option("--run-dir", train_args.run_dir)->required();
    train_cmd->add_flag("--force", train_args.force);
    train_cmd->add_flag("--resume", train_args.resume);
    train_cmd->add_option("--stop-after", train_args.stop_after, "run at most this many epochs");
    train_cmd->add_option("--seed", train_args.seed);
    train_cmd->add_option("--threads", train_args.threads, "0 = hardware concurrency");
    train_cmd->add_option("--bitwise-repro", train_args.bitwise_repro, "true or false");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Rank-based evaluation of a trained run");
    eval_cmd->add_option("--run-dir", eval_args.run_dir)->required();
    eval_cmd->add_option("--split", eval_args.split)->capture_default_str();
    eval_cmd->add_option("--setting", eval_args.setting)->capture_default_str();
    eval_cmd->add_option("--mode", eval_args.mode)->capture_default_str();
    eval_cmd->add_flag("--entail-averaged", eval_args.entail_averaged);
    eval_cmd->add_option("--entail-index", eval_args.entail_index);
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "auto, best or last")->capture_default_str();
    eval_cmd->add_option("--out", eval_args.out, "JSON report path");
    eval_cmd->add_flag("--force", eval_args.force);
    eval_cmd->add_option("--threads", eval_args.threads, "0 = hardware concurrency");

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every point of a loss-weight grid");
    sweep_cmd->add_option("--graph", sweep_args.graph)->required();
    sweep_cmd->add_option("--index", sweep_args.index);
    sweep_cmd->add_option("--grid-config", sweep_args.grid_config)->required();
    sweep_cmd->add_option("--out", sweep_args.out, "CSV path");
    sweep_cmd->add_flag("--force", sweep_args.force);
    sweep_cmd->add_option("--seed", sweep_args.seed);
    sweep_cmd->add_option("--threads", sweep_args.threads, "0 = hardware concurrency");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    }

    try {
        logger->set_level(spdlog::level::from_str(log_level));
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_args, out);
        if (export_cmd->parsed()) return cmd_export_nodes(export_graph, export_out, export_force, out);
        if (index_cmd->parsed()) return cmd_index(index_args, out);
        if (cov_cmd->parsed()) return cmd_coverage(cov_args, out);
        if (train_cmd->parsed()) return cmd_train(train_args, out);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, out);
        return exit_input;
    } catch (const OverwriteError& e) {
        err << "error: " << e.what() << "\n";
        return exit_overwrite;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_internal;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_internal;
    }
}

}  // namespace entailkg
