"""Python bindings for the sqlicl text-to-SQL toolkit."""

import os
from pathlib import Path

_packaged = Path(__file__).with_name("data")
if "SQLICL_DATA_DIR" not in os.environ and (_packaged / "templates").is_dir():
    os.environ["SQLICL_DATA_DIR"] = str(_packaged)

from ._core import (  # noqa: E402
    Error,
    classify_hardness,
    correct,
    exact_set_match,
    execution_match,
    normalized_tree,
    pq_gram_distance,
    render,
    run_cli,
    sql_graph,
    tree_edit_distance,
)

__all__ = [
    "Error",
    "classify_hardness",
    "correct",
    "exact_set_match",
    "execution_match",
    "normalized_tree",
    "pq_gram_distance",
    "render",
    "run_cli",
    "sql_graph",
    "tree_edit_distance",
]
