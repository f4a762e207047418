"""Grid search over the five filter hyperparameters.

The grid is exhaustive, candidates are independent, and ties break to
the lexicographically smallest parameter tuple, so the result never
depends on enumeration order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import (EmptySpace, FlowcastError, InsufficientGroup,
                     NoViableCandidate)
from .fkkf import FkkfHyperparams
from .trace_io import leave_one_out_splits


@dataclass(frozen=True)
class SearchSpace:
    lambda_t: tuple = (1e-4, 1e-3, 1e-2, 1e-1)
    lambda_o: tuple = (1e-4, 1e-3, 1e-2, 1e-1)
    state_bw_scale: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    obs_bw_scale: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    kappa: tuple = (1e-4, 1e-3, 1e-2, 1e-1)

    def __post_init__(self):
        for name in ("lambda_t", "lambda_o", "state_bw_scale", "obs_bw_scale", "kappa"):
            grid = getattr(self, name)
            if len(grid) == 0:
                raise EmptySpace(f"empty grid for {name}")
            if any(v <= 0 for v in grid):
                raise ValueError(f"grid values for {name} must be positive")

    def candidates(self):
        """All parameter tuples in lexicographic order."""
        for combo in product(sorted(self.lambda_t), sorted(self.lambda_o),
                             sorted(self.state_bw_scale), sorted(self.obs_bw_scale),
                             sorted(self.kappa)):
            yield FkkfHyperparams(*combo)


def _default_error_fn():
    # evaluation imports hyperopt indirectly via the CLI; resolve lazily to
    # keep this module importable on its own.
    from . import evaluation

    def error_fn(train, test, hyper, cfg, chunk_length_s):
        split = evaluation.evaluate_split(train, test, hyper, cfg, chunk_length_s)
        return abs(split.pred_error)

    return error_fn


def _validation_folds(flows, validation: str, holdout_fraction: float):
    flows = list(flows)
    if validation == "leave_one_out":
        if len(flows) < 2:
            raise InsufficientGroup("leave-one-out needs >= 2 flows")
        return leave_one_out_splits(flows)
    if validation == "holdout_fraction":
        k = max(1, int(round(holdout_fraction * len(flows))))
        if len(flows) - k < 1:
            raise InsufficientGroup("holdout leaves no training flows")
        train, held = flows[:-k], flows[-k:]
        return [(train, test) for test in held]
    raise ValueError(f"unknown validation scheme: {validation}")


def grid_search(train_flows, space: SearchSpace, validation: str = "leave_one_out",
                error_fn=None, *, cfg=None, chunk_length_s: float | None = None,
                holdout_fraction: float = 0.25, audit_path=None):
    """Exhaustively evaluate the grid and return (best hyperparams, error).

    error_fn(train, test, hyper, cfg, chunk_length_s) scores one
    validation fold; by default it is the magnitude of the peak
    prediction error.  Candidates that fail to learn score inf; if all
    fail, NoViableCandidate is raised.
    """
    if error_fn is None:
        error_fn = _default_error_fn()
    if cfg is None:
        from .evaluation import ExperimentConfig
        cfg = ExperimentConfig()
    if chunk_length_s is None:
        chunk_length_s = cfg.chunk_lengths_s[0]
    folds = _validation_folds(train_flows, validation, holdout_fraction)

    audit_rows = []
    best = None  # (error, tuple, hyper)
    for hyper in space.candidates():
        fold_errors = []
        for train, test in folds:
            try:
                fold_errors.append(error_fn(train, test, hyper, cfg, chunk_length_s))
            except FlowcastError:
                fold_errors.append(float("inf"))
        error = float(np.mean(fold_errors)) if fold_errors else float("inf")
        audit_rows.append((hyper.as_tuple(), error))
        key = (error, hyper.as_tuple())
        if best is None or key < (best[0], best[1]):
            best = (error, hyper.as_tuple(), hyper)
    if audit_path is not None:
        _append_audit(audit_path, audit_rows)
    if best is None or not np.isfinite(best[0]):
        raise NoViableCandidate("no grid point produced a finite validation error")
    return best[2], best[0]


def _append_audit(path, rows) -> None:
    import os
    write_header = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(["lambda_t", "lambda_o", "state_bw_scale",
                             "obs_bw_scale", "kappa", "error"])
        for params, error in rows:
            writer.writerow([format(p, ".12g") for p in params]
                            + [format(error, ".12g")])
