"""Experiment pipeline and command-line interface."""

from .pipeline import (
    Aggregate,
    BenchConfig,
    Corpus,
    Corruption,
    EvalRecord,
    NodeRecord,
    ProblemRecord,
    aggregate,
    dense_graph,
    evaluate,
    extract_corpus,
    gen_corpus,
    load_corpus,
    mismatch_eval,
    oracle_sparse_graph,
    parse_samplers,
    read_eval_csv,
    read_jsonl,
    sparse_graph,
    training_pairs,
    union_reference_cost,
    wilson_interval,
    write_aggregate_csv,
    write_eval_csv,
    write_jsonl,
    write_plot_data,
)

__all__ = [
    "Aggregate",
    "BenchConfig",
    "Corpus",
    "Corruption",
    "EvalRecord",
    "NodeRecord",
    "ProblemRecord",
    "aggregate",
    "dense_graph",
    "evaluate",
    "extract_corpus",
    "gen_corpus",
    "load_corpus",
    "mismatch_eval",
    "oracle_sparse_graph",
    "parse_samplers",
    "read_eval_csv",
    "read_jsonl",
    "sparse_graph",
    "training_pairs",
    "union_reference_cost",
    "wilson_interval",
    "write_aggregate_csv",
    "write_eval_csv",
    "write_jsonl",
    "write_plot_data",
]
