"""Requirement-conditioned likelihood: the fraction of trees whose own
predicted response meets the requirement."""

import csv
from dataclasses import dataclass

import numpy as np

from .forest import per_tree_response, per_tree_responses
from .requirements import satisfied_rows


@dataclass(frozen=True, eq=False)
class LikelihoodResult:
    value: float
    votes: np.ndarray


def _result(votes):
    return LikelihoodResult(int(votes.sum()) / votes.shape[0], votes)


def likelihood(forest, x, grid, req):
    x = np.asarray(x, dtype=float)
    rows = per_tree_response(forest, x, grid)
    return _result(satisfied_rows(req, rows, grid))


def likelihoods(forest, X, grid, req, chunk=256):
    """Vote matrices for many designs at once: returns ``(values, votes)``
    with ``votes`` shaped ``(n_designs, N)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    votes = np.empty((X.shape[0], forest.n_trees), dtype=bool)
    for start in range(0, X.shape[0], chunk):
        block = per_tree_responses(forest, X[start:start + chunk], grid)
        N, P, d_y = block.shape
        ok = satisfied_rows(req, block.transpose(1, 0, 2).reshape(P * N, d_y), grid)
        votes[start:start + P] = ok.reshape(P, N)
    return votes.sum(axis=1) / forest.n_trees, votes


def likelihood_map(forest, grid, req, probe):
    """``[(x, value), ...]`` over probe designs, in input order."""
    probe = np.atleast_2d(np.asarray(probe, dtype=float))
    values, _ = likelihoods(forest, probe, grid, req)
    return [(x, float(v)) for x, v in zip(probe, values)]


def write_likelihood_csv(path, rows, names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["likelihood"])
        for x, v in rows:
            w.writerow([repr(float(c)) for c in x] + [repr(float(v))])
