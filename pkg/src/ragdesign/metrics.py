"""Accuracy of forward predictions and scoring of generated designs."""

import csv
from dataclasses import dataclass

import numpy as np

from .oracles import oracle_responses
from .requirements import overlap_rows, satisfied_rows


def mse(y, y_hat):
    """``(y - y_hat)^T (y - y_hat) / d_y``; for 2-D input, averaged over every entry."""
    y, y_hat = np.asarray(y, dtype=float), np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    return float(np.mean((y - y_hat) ** 2))


def mape(y, y_hat, return_excluded=False):
    """Mean absolute percentage error over all components with ``y != 0``.

    Zero-valued targets (e.g. stress at zero strain) are skipped; with
    ``return_excluded`` the number skipped is returned alongside.
    """
    y, y_hat = np.asarray(y, dtype=float), np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    keep = y != 0
    if not keep.any():
        raise ValueError("every target component is zero; MAPE undefined")
    value = float(100.0 * np.mean(np.abs(y[keep] - y_hat[keep]) / np.abs(y[keep])))
    return (value, int(np.sum(~keep))) if return_excluded else value


@dataclass(frozen=True, eq=False)
class CandidateEvaluation:
    likelihood: np.ndarray
    satisfied: np.ndarray
    overlap: np.ndarray

    @property
    def satisfaction_rate(self):
        return float(np.mean(self.satisfied))

    @property
    def mean_overlap(self):
        return float(np.mean(self.overlap))


def evaluate_candidates(X, likelihood, oracle, grid, req):
    """Validate candidate designs against the true (oracle) responses."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("no candidates to evaluate")
    Y = oracle_responses(oracle, X, grid)
    ok = satisfied_rows(req, Y, grid)
    ov = overlap_rows(req, Y, grid)
    if np.any(ov[ok] < 1.0):
        raise AssertionError("a satisfied design scored overlap below 1")
    return CandidateEvaluation(np.asarray(likelihood, dtype=float), ok, ov)


@dataclass(frozen=True, eq=False)
class ThresholdSweep:
    """Rates over designs whose likelihood is at least each threshold.

    Satisfaction and overlap are NaN where no design is selected.
    """

    thresholds: np.ndarray
    selection_rate: np.ndarray
    satisfaction_rate: np.ndarray
    overlap_rate: np.ndarray


def threshold_sweep(likelihood, satisfied, overlap, thresholds):
    lik = np.asarray(likelihood, dtype=float)
    sat = np.asarray(satisfied, dtype=bool)
    ov = np.asarray(overlap, dtype=float)
    t = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("thresholds must be sorted ascending")
    if lik.size == 0:
        raise ValueError("no candidates")
    sel = np.empty(t.size)
    srate = np.full(t.size, np.nan)
    orate = np.full(t.size, np.nan)
    for i, th in enumerate(t):
        picked = lik >= th
        sel[i] = picked.mean()
        if picked.any():
            srate[i] = sat[picked].mean()
            orate[i] = ov[picked].mean()
    return ThresholdSweep(t, sel, srate, orate)


def _cell(v):
    return "" if np.isnan(v) else repr(float(v))


def write_sweep_csv(path, sweep):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "selection_rate", "satisfaction_rate", "overlap_rate"])
        for row in zip(sweep.thresholds, sweep.selection_rate, sweep.satisfaction_rate, sweep.overlap_rate):
            w.writerow([_cell(v) for v in row])
