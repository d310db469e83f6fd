import time

import numpy as np
import pytest

from ragdesign.forest import ForestParams, fit_dataset
from ragdesign.metrics import evaluate_candidates
from ragdesign.oracles import generate_dataset
from ragdesign.requirements import Requirement, Segment
from ragdesign.sampler import SamplerConfig, mh_sample


@pytest.fixture(scope="session")
def diatomic_split():
    """450 Latin-hypercube designs on the 2 x 61 grid: 400 train, 50 held out."""
    ds = generate_dataset("diatomic", m=450, seed=11)
    perm = np.random.default_rng(11).permutation(ds.m)
    return ds.subset(np.sort(perm[:400])), ds.subset(np.sort(perm[400:]))


@pytest.fixture(scope="session")
def diatomic_forest(diatomic_split):
    train, _ = diatomic_split
    return fit_dataset(train, ForestParams(n_trees=100, max_depth=20, seed=1))


@pytest.fixture(scope="session")
def gap_requirement():
    # analytic feasibility: see oracles.diatomic_band_clear
    return Requirement((Segment("forbid", {}, 1.05, 1.25),), "zone-wide stopband 1.05-1.25")


@pytest.fixture(scope="session")
def snap_forest():
    ds = generate_dataset("snap", m=400, seed=5)
    return fit_dataset(ds, ForestParams(n_trees=100, max_depth=15, seed=5))


@pytest.fixture(scope="session")
def gap_candidates(diatomic_forest, gap_requirement):
    """30 candidates for the gap requirement under default sampler settings,
    oracle-evaluated; returns ``(candidates, evaluation, seconds)``."""
    t0 = time.perf_counter()
    cfg = SamplerConfig(n_samples=8, seed=0)  # 4 chains x 8, truncated to 30
    cands = mh_sample(diatomic_forest, None, gap_requirement, None, cfg)[:30]
    X = np.array([c.design for c in cands])
    lik = np.array([c.likelihood for c in cands])
    ev = evaluate_candidates(X, lik, "diatomic", diatomic_forest.grid, gap_requirement)
    return cands, ev, time.perf_counter() - t0
