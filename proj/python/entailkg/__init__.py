"""Python bindings for the entailkg knowledge-graph completion engine."""

from ._entailkg import (
    EntailIndex,
    Graph,
    InputError,
    Trainer,
    aggregate_ranks,
    build_index,
    cosine,
    coverage_at_k,
    ingest,
    kvsall_bce,
    load_embeddings,
    load_graph,
    load_index,
    normalize,
    rank_of,
    run_cli,
    save_embeddings,
    save_graph,
    save_index,
)

__all__ = [
    "EntailIndex",
    "Graph",
    "InputError",
    "Trainer",
    "aggregate_ranks",
    "build_index",
    "cosine",
    "coverage_at_k",
    "ingest",
    "kvsall_bce",
    "load_embeddings",
    "load_graph",
    "load_index",
    "normalize",
    "rank_of",
    "run_cli",
    "save_embeddings",
    "save_graph",
    "save_index",
]
