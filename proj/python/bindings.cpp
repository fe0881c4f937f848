#include <sstream>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "entailkg/cli.h"
#include "entailkg/config.h"
#include "entailkg/embeddings.h"
#include "entailkg/entail_index.h"
#include "entailkg/errors.h"
#include "entailkg/eval.h"
#include "entailkg/graph.h"
#include "entailkg/losses.h"
#include "entailkg/trainer.h"

namespace py = pybind11;
using namespace entailkg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

EmbeddingMatrix to_matrix(const FloatArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto dim = static_cast<std::size_t>(a.shape(1));
    return EmbeddingMatrix(rows, dim, std::vector<float>(a.data(), a.data() + rows * dim));
}

py::array_t<float> to_array(const EmbeddingMatrix& m) {
    py::array_t<float> out({m.rows(), m.dim()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<std::uint32_t> triplet_array(std::span<const Triplet> ts) {
    py::array_t<std::uint32_t> out({static_cast<py::ssize_t>(ts.size()), py::ssize_t{3}});
    auto* p = out.mutable_data();
    for (const auto& t : ts) {
        *p++ = t.head;
        *p++ = t.relation;
        *p++ = t.tail;
    }
    return out;
}

TrainConfig config_from_dict(const py::dict& d) {
    std::ostringstream text;
    for (const auto& [k, v] : d) {
        std::string value;
        if (py::isinstance<py::bool_>(v)) value = v.cast<bool>() ? "true" : "false";
        else value = py::str(v).cast<std::string>();
        text << py::str(k).cast<std::string>() << " = " << value << "\n";
    }
    std::istringstream in(text.str());
    return parse_train_config(KeyValueConfig::parse(in, "<dict>"));
}

py::dict metrics_dict(const EpochMetrics& m) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["l1"] = m.l1;
    d["l2"] = m.l2;
    d["lc"] = m.lc;
    d["loss"] = m.loss;
    d["triplet_steps"] = m.triplet_steps;
    d["contrast_steps"] = m.contrast_steps;
    if (m.valid_mrr) d["valid_mrr"] = *m.valid_mrr;
    return d;
}

py::object report_dict(const EvalReport& r) {
    return py::module_::import("json").attr("loads")(r.to_json().dump());
}

// Owns the graph, optional index and training state of one model.
class Trainer {
public:
    Trainer(Graph g, const py::dict& config, std::optional<EntailIndex> index)
        : graph_(std::move(g)), cfg_(config_from_dict(config)), index_(std::move(index)),
          labels_(LabelIndex::train_only(graph_)), state_(init_training(graph_, cfg_)) {}

    py::dict train_epoch() {
        py::gil_scoped_release release;
        const auto m = entailkg::train_epoch(labels_, index_ ? &*index_ : nullptr, cfg_, state_);
        py::gil_scoped_acquire acquire;
        return metrics_dict(m);
    }

    py::list fit(std::optional<std::size_t> max_epochs) {
        FitResult result;
        {
            py::gil_scoped_release release;
            result = entailkg::fit(graph_, index_ ? &*index_ : nullptr, cfg_, state_, {}, max_epochs);
        }
        py::list out;
        for (const auto& m : result.history) out.append(metrics_dict(m));
        return out;
    }

    py::object evaluate(const std::string& split, const std::string& setting, const std::string& mode,
                        bool entail_averaged, std::optional<EntailIndex> entail_index) {
        EvalOptions options;
        options.setting = parse_setting(setting);
        options.mode = parse_rank_mode(mode);
        options.scoring = entail_averaged ? Scoring::entail_averaged : Scoring::plain;
        options.threads = cfg_.threads;
        if (entail_averaged) {
            if (!entail_index && !index_) throw std::invalid_argument("entail-averaged evaluation needs an index");
            options.index = entail_index ? &*entail_index : &*index_;
        }
        return report_dict(entailkg::evaluate(graph_, state_.params, parse_split(split), options));
    }

    py::array_t<double> score_all(NodeId h, RelationId r) const {
        if (h >= graph_.node_count() || r >= graph_.relation_count_with_inverses()) {
            throw std::out_of_range("node or relation id out of range");
        }
        return to_array(entailkg::score_all(state_.params, h, r));
    }

    py::array_t<float> entity_table() const {
        const auto& p = state_.params;
        return to_array(EmbeddingMatrix(p.shape.entities, p.shape.dim, p.entity));
    }

    std::size_t epoch() const { return state_.epoch; }
    void save(const std::filesystem::path& path) const { save_checkpoint(state_, path, true); }

private:
    Graph graph_;
    TrainConfig cfg_;
    std::optional<EntailIndex> index_;
    LabelIndex labels_;
    TrainingState state_;
};

}  // namespace

PYBIND11_MODULE(_entailkg, m) {
    m.doc() = "Knowledge-graph completion engine";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

    py::class_<Graph>(m, "Graph")
        .def_property_readonly("node_count", &Graph::node_count)
        .def_property_readonly("relation_count", &Graph::relation_count)
        .def_property_readonly("nodes", &Graph::nodes)
        .def_property_readonly("relations", &Graph::relations)
        .def_property_readonly("train", [](const Graph& g) { return triplet_array(g.train()); })
        .def_property_readonly("valid", [](const Graph& g) { return triplet_array(g.valid()); })
        .def_property_readonly("test", [](const Graph& g) { return triplet_array(g.test()); })
        .def("inverse", &Graph::inverse)
        .def("find_node", &Graph::find_node)
        .def("train_nodes", &Graph::train_nodes)
        .def("inductive_nodes", py::overload_cast<>(&Graph::inductive_nodes, py::const_))
        .def("degree_stats", [](const Graph& g) {
            const auto s = degree_stats(g);
            py::dict d;
            d["avg_in_degree"] = s.avg_in_degree;
            d["node_count"] = s.node_count;
            d["relation_count"] = s.relation_count;
            d["unseen_pct"] = s.unseen_pct;
            return d;
        });

    m.def("ingest", [](const std::filesystem::path& train, const std::filesystem::path& valid,
                       const std::filesystem::path& test) { return ingest(train, valid, test); },
          py::arg("train"), py::arg("valid"), py::arg("test"));
    m.def("load_graph", py::overload_cast<const std::filesystem::path&>(&load_graph));
    m.def("save_graph", py::overload_cast<const Graph&, const std::filesystem::path&>(&save_graph));

    m.def("load_embeddings", [](const std::filesystem::path& path, std::optional<std::size_t> expected_rows) {
        return to_array(load_embeddings(path, expected_rows));
    }, py::arg("path"), py::arg("expected_rows") = py::none());
    m.def("save_embeddings", [](const std::filesystem::path& path, const FloatArray& a) {
        save_embeddings(to_matrix(a), path);
    });
    m.def("normalize", [](const FloatArray& a) { return to_array(normalize(to_matrix(a))); });
    m.def("cosine", [](const FloatArray& a, const FloatArray& b) {
        return cosine(std::span<const float>(a.data(), a.size()), std::span<const float>(b.data(), b.size()));
    });

    py::class_<EntailIndex>(m, "EntailIndex")
        .def_property_readonly("node_count", &EntailIndex::node_count)
        .def_property_readonly("k_max", &EntailIndex::k_max)
        .def("neighbors", [](const EntailIndex& idx, NodeId v) {
            if (v >= idx.node_count()) throw std::out_of_range("node id out of range");
            std::vector<std::pair<NodeId, float>> out;
            for (const auto& n : idx.neighbors(v)) out.emplace_back(n.node, n.score);
            return out;
        })
        .def("truncated", &EntailIndex::truncated)
        .def("__eq__", [](const EntailIndex& a, const EntailIndex& b) { return a == b; });

    m.def("build_index", [](const FloatArray& emb, std::size_t k_max, std::vector<NodeId> restrict_to,
                            unsigned threads) {
        IndexBuildOptions options;
        options.restrict_to = std::move(restrict_to);
        options.threads = threads;
        const auto matrix = normalize(to_matrix(emb));  // rows are unit-normalized first, as in the CLI
        py::gil_scoped_release release;
        return build_index(matrix, k_max, options);
    }, py::arg("embeddings"), py::arg("k_max"), py::arg("restrict_to") = std::vector<NodeId>{},
       py::arg("threads") = 0u);
    m.def("load_index", py::overload_cast<const std::filesystem::path&>(&load_index));
    m.def("save_index", py::overload_cast<const EntailIndex&, const std::filesystem::path&>(&save_index));
    m.def("coverage_at_k", [](const EntailIndex& idx, const std::vector<NodeId>& train_nodes,
                              const std::vector<NodeId>& eval_nodes, std::size_t k) {
        return coverage_at_k(idx, train_nodes, eval_nodes, k);
    });

    m.def("kvsall_bce", [](const DoubleArray& logits, const DoubleArray& labels, double smoothing) {
        const auto r = kvsall_bce(std::span<const double>(logits.data(), logits.size()),
                                  std::span<const double>(labels.data(), labels.size()), smoothing);
        return py::make_tuple(r.loss, to_array(r.grad));
    }, py::arg("logits"), py::arg("labels"), py::arg("label_smoothing") = 0.0);

    m.def("rank_of", [](const DoubleArray& scores, NodeId gold, const std::vector<NodeId>& excluded) {
        return rank_of(std::span<const double>(scores.data(), scores.size()), gold, excluded);
    }, py::arg("scores"), py::arg("gold"), py::arg("excluded") = std::vector<NodeId>{});
    m.def("aggregate_ranks", [](std::vector<std::size_t> ranks) { return report_dict(aggregate(std::move(ranks))); });

    py::class_<Trainer>(m, "Trainer")
        .def(py::init<Graph, py::dict, std::optional<EntailIndex>>(), py::arg("graph"), py::arg("config"),
             py::arg("index") = py::none())
        .def("train_epoch", &Trainer::train_epoch)
        .def("fit", &Trainer::fit, py::arg("max_epochs") = py::none())
        .def("evaluate", &Trainer::evaluate, py::arg("split") = "test", py::arg("setting") = "general",
             py::arg("mode") = "filtered", py::arg("entail_averaged") = false, py::arg("entail_index") = py::none())
        .def("score_all", &Trainer::score_all)
        .def("entity_table", &Trainer::entity_table)
        .def("save_checkpoint", &Trainer::save)
        .def_property_readonly("epoch", &Trainer::epoch);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    });
}
