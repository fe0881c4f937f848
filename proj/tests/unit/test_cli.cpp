#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "entailkg/cli.h"
#include "entailkg/embeddings.h"
#include "entailkg/graph.h"
#include "support/toy_kg.h"

using namespace entailkg;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Toy graph files, node embeddings in graph order and a small train config.
struct Workspace {
    fs::path dir = toy::temp_dir("cli");
    toy::ToyKg kg = toy::make_toy_kg();

    Workspace() {
        toy::write_files(kg, dir);
        save_embeddings(kg.entail_embeddings, dir / "emb.ekge");
        std::ofstream(dir / "base.cfg") << "lr = 0.01\nbatch_size = 16\nepochs = 3\ndim = 8\nkernels = 2\n"
                                           "kernel_width = 3\nthreads = 1\nseed = 4\n";
        std::ofstream(dir / "entail.cfg") << "lr = 0.01\nbatch_size = 16\nepochs = 3\ndim = 8\nkernels = 2\n"
                                             "kernel_width = 3\nthreads = 1\nseed = 4\ngamma1 = 1\nk1 = 3\n"
                                             "gamma2 = 0.5\nk2 = 3\neval_every = 1\n";
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }

    Result ingest() const {
        return run({"ingest", "--train", p("train.tsv"), "--valid", p("valid.tsv"), "--test", p("test.tsv"), "--out",
                    p("g.ekgc")});
    }
    Result index() const {
        return run({"index", "--graph", p("g.ekgc"), "--embeddings", p("emb.ekge"), "--k-max", "5", "--out",
                    p("i.ekgi")});
    }
};

}  // namespace

TEST_CASE("cli: help and usage errors") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--help"}).out.find("ingest") != std::string::npos);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"ingest", "--train", "x"}).code == 2);
}

TEST_CASE("cli: ingest, overwrite protection and missing input") {
    Workspace ws;
    auto r = ws.ingest();
    REQUIRE(r.code == 0);
    CHECK(r.out.find("nodes 60") != std::string::npos);
    CHECK(fs::exists(ws.dir / "g.ekgc"));
    CHECK(load_graph(ws.dir / "g.ekgc").node_count() == ws.kg.graph.node_count());

    r = ws.ingest();
    CHECK(r.code == 3);
    CHECK(r.err.find("--force") != std::string::npos);
    CHECK(run({"ingest", "--train", ws.p("train.tsv"), "--valid", ws.p("valid.tsv"), "--test", ws.p("test.tsv"),
               "--out", ws.p("g.ekgc"), "--force"})
              .code == 0);
    CHECK(run({"ingest", "--train", ws.p("nope.tsv"), "--valid", ws.p("valid.tsv"), "--test", ws.p("test.tsv"),
               "--out", ws.p("h.ekgc")})
              .code == 2);

    std::ofstream(ws.dir / "bad.tsv") << "only two\tcolumns\n";
    r = run({"ingest", "--train", ws.p("bad.tsv"), "--valid", ws.p("valid.tsv"), "--test", ws.p("test.tsv"), "--out",
             ws.p("h.ekgc")});
    CHECK(r.code == 2);
    CHECK(r.err.find("bad.tsv") != std::string::npos);
}

TEST_CASE("cli: export-nodes, index and coverage") {
    Workspace ws;
    REQUIRE(ws.ingest().code == 0);
    REQUIRE(run({"export-nodes", "--graph", ws.p("g.ekgc"), "--out", ws.p("nodes.txt")}).code == 0);
    std::istringstream nodes(slurp(ws.dir / "nodes.txt"));
    std::string line;
    NodeId id = 0;
    while (std::getline(nodes, line)) CHECK(line == ws.kg.graph.node_text(id++));
    CHECK(id == ws.kg.graph.node_count());

    auto r = ws.index();
    REQUIRE(r.code == 0);
    CHECK(r.out.find("nodes/s") != std::string::npos);
    CHECK(load_index(ws.dir / "i.ekgi") == build_index(ws.kg.entail_embeddings, 5));

    r = run({"coverage", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--k-list", "1,5", "--split", "test",
             "--csv", ws.p("cov.csv")});
    REQUIRE(r.code == 0);
    CHECK(slurp(ws.dir / "cov.csv").rfind("k,coverage_pct\n", 0) == 0);
    CHECK(run({"coverage", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--k-list", "6"}).code == 2);
    CHECK(run({"coverage", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--k-list", "0"}).code == 2);

    EmbeddingMatrix short_emb(3, 2, {1, 0, 0, 1, 1, 1});
    save_embeddings(short_emb, ws.dir / "short.ekge");
    CHECK(run({"index", "--graph", ws.p("g.ekgc"), "--embeddings", ws.p("short.ekge"), "--k-max", "1", "--out",
               ws.p("j.ekgi")})
              .code == 2);
}

TEST_CASE("cli: train, eval labels and resume") {
    Workspace ws;
    REQUIRE(ws.ingest().code == 0);
    REQUIRE(ws.index().code == 0);

    auto r = run({"train", "--graph", ws.p("g.ekgc"), "--config", ws.p("base.cfg"), "--run-dir", ws.p("base")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("ran 3 epochs") != std::string::npos);
    for (auto f : {"config.txt", "run.json", "metrics.jsonl", "checkpoint.ckpt"}) CHECK(fs::exists(ws.dir / "base" / f));
    CHECK(run({"train", "--graph", ws.p("g.ekgc"), "--config", ws.p("base.cfg"), "--run-dir", ws.p("base")}).code == 3);

    r = run({"eval", "--run-dir", ws.p("base"), "--out", ws.p("base.json")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("baseline (w/o entail)") != std::string::npos);
    const auto report = nlohmann::json::parse(slurp(ws.dir / "base.json"));
    CHECK(report["query_count"] == 2 * ws.kg.graph.test().size());

    // Entailment run needs an index.
    CHECK(run({"train", "--graph", ws.p("g.ekgc"), "--config", ws.p("entail.cfg"), "--run-dir", ws.p("e0")}).code == 2);
    r = run({"train", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--config", ws.p("entail.cfg"),
             "--run-dir", ws.p("full")});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(ws.dir / "full" / "best.ckpt"));
    r = run({"eval", "--run-dir", ws.p("full"), "--setting", "inductive", "--entail-averaged"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("entail (gamma1=1, k1=3, gamma2=0.5, k2=3) + entail-averaged") != std::string::npos);
    CHECK(run({"eval", "--run-dir", ws.p("full"), "--setting", "transductive"}).code == 2);

    // Interrupted after 2 epochs, then resumed: same metrics and checkpoint.
    REQUIRE(run({"train", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--config", ws.p("entail.cfg"),
                 "--run-dir", ws.p("part"), "--stop-after", "2"})
                .code == 0);
    CHECK(run({"train", "--run-dir", ws.p("part"), "--resume", "--seed", "9"}).code == 2);
    REQUIRE(run({"train", "--run-dir", ws.p("part"), "--resume"}).code == 0);
    CHECK(slurp(ws.dir / "part" / "metrics.jsonl") == slurp(ws.dir / "full" / "metrics.jsonl"));
    CHECK(slurp(ws.dir / "part" / "checkpoint.ckpt") == slurp(ws.dir / "full" / "checkpoint.ckpt"));
    CHECK(slurp(ws.dir / "part" / "best.ckpt") == slurp(ws.dir / "full" / "best.ckpt"));
}

TEST_CASE("cli: sweep writes one CSV row per grid point") {
    Workspace ws;
    REQUIRE(ws.ingest().code == 0);
    REQUIRE(ws.index().code == 0);
    std::ofstream(ws.dir / "grid.cfg") << "gamma1 = 0, 1\nk1 = 3\nepochs = 1\ndim = 8\nkernels = 2\nkernel_width = 3\n"
                                          "lr = 0.01\nbatch_size = 16\nthreads = 1\n";
    auto r = run({"sweep", "--graph", ws.p("g.ekgc"), "--grid-config", ws.p("grid.cfg"), "--out", ws.p("s.csv")});
    CHECK(r.code == 2);  // gamma1 > 0 without an index
    r = run({"sweep", "--graph", ws.p("g.ekgc"), "--index", ws.p("i.ekgi"), "--grid-config", ws.p("grid.cfg"), "--out",
             ws.p("s.csv")});
    REQUIRE(r.code == 0);
    const auto csv = slurp(ws.dir / "s.csv");
    CHECK(csv == r.out);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("\"w/o entail\"") != std::string::npos);
}
