"""Python access to the reflcausal library."""

import json

from ._core import (
    Error,
    ValidationError,
    anova_oneway,
    classify_stability,
    cochran_q,
    cvll_gain,
    levene,
    partial_eta_squared,
    run_cli,
    select_representative,
    token_jaccard,
)
from . import _core

__all__ = [
    "Error",
    "ValidationError",
    "anova_oneway",
    "analyze_matrix",
    "classify_stability",
    "cochran_q",
    "cvll_gain",
    "levene",
    "partial_eta_squared",
    "run_cli",
    "run_pipeline",
    "select_representative",
    "self_refine",
    "synth",
    "token_jaccard",
]


def run_pipeline(rows, labels, seed=0, k=5):
    """Discovery plus the three verification stages on 0/1 rows.

    Every label but the last looks like NAME@ROUND; the last names the outcome.
    """
    return json.loads(_core.run_pipeline_json(rows, labels, seed, k))


def synth(rounds, patterns, density, n, seed=0):
    """Returns (model, labels, rows) for a sampled planted network."""
    model, labels, rows = _core.synth_json(rounds, patterns, density, n, seed)
    return json.loads(model), labels, rows


def self_refine(query, t_max=5, resample_count=20, seed=0, backend="mock"):
    """Returns (trajectory, backend_calls); calls are counted for mock backends only."""
    text, calls = _core.self_refine_json(query, t_max, resample_count, seed, backend)
    return json.loads(text), calls


def analyze_matrix(conditions, matrix):
    return json.loads(_core.cochran_from_counts_json(conditions, matrix))
