"""Bagged regression-tree ensemble over the joint input ``(x, a)``.

Every tree predicts one scalar response value at a (design, query point)
pair. Evaluating all trees on the grid of a design gives one full discrete
response per tree; their mean is the forest prediction and their spread
(population variance, ``N`` in the denominator) is the uncertainty.
"""

import gzip
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _cart
from .response import DesignSpace, QueryGrid, flatten_pairs
from .rng import derive_rng

FOREST_FORMAT = "ragdesign.forest"
FOREST_VERSION = 1


class ForestFormatError(ValueError):
    pass


def default_threads():
    env = os.environ.get("RAG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def resolved_features(self, n_features):
        if self.features_per_split is None:
            return max(1, min(n_features, round(math.sqrt(n_features))))
        return self.features_per_split

    def validate(self, n_features):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        k = self.resolved_features(n_features)
        if not 1 <= k <= n_features:
            raise ValueError(f"features_per_split must lie in [1, {n_features}], got {k}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; ``feature == -1`` marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def n_leaves(self):
        return int(np.sum(self.feature == _cart.LEAF))

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != _cart.LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_nested(self):
        def build(i):
            if self.feature[i] == _cart.LEAF:
                return {"value": float(self.value[i])}
            return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                    "value": float(self.value[i]), "left": build(self.left[i]), "right": build(self.right[i])}
        return build(0)

    @classmethod
    def from_nested(cls, root):
        feature, threshold, left, right, value = [], [], [], [], []
        stack = [(root, -1, None)]
        while stack:
            node, parent, side = stack.pop()
            i = len(feature)
            if parent >= 0:
                (left if side == "left" else right)[parent] = i
            if "feature" in node:
                feature.append(int(node["feature"]))
                threshold.append(float(node["threshold"]))
                value.append(float(node.get("value", 0.0)))
                left.append(-1)
                right.append(-1)
                stack.append((node["right"], i, "right"))
                stack.append((node["left"], i, "left"))
            else:
                feature.append(_cart.LEAF)
                threshold.append(0.0)
                value.append(float(node["value"]))
                left.append(-1)
                right.append(-1)
        return cls(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(value))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    params: ForestParams
    n_features: int
    space: DesignSpace | None = None
    grid: QueryGrid | None = None
    fingerprint: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if len(self.trees) != self.params.n_trees:
            raise ValueError(f"forest holds {len(self.trees)} trees, params say {self.params.n_trees}")
        if self.space is not None and self.grid is not None and self.space.d + self.grid.d_a != self.n_features:
            raise ValueError("space and grid dimensions do not add up to the tree input width")

    @property
    def n_trees(self):
        return len(self.trees)

    @cached_property
    def _packed(self):
        sizes = [t.n_nodes for t in self.trees]
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        shift = lambda child, off: np.where(child >= 0, child + off, -1)
        return (np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, roots)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, roots)]),
                np.concatenate([t.value for t in self.trees]),
                roots)

    def predict_inputs(self, inputs):
        """Per-tree outputs ``(N, n_rows)`` at raw joint inputs ``(n_rows, d_x + d_a)``."""
        inputs = np.ascontiguousarray(np.atleast_2d(inputs), dtype=float)
        if inputs.shape[1] != self.n_features:
            raise ValueError(f"inputs have {inputs.shape[1]} columns, forest expects {self.n_features}")
        return _cart.predict_trees(*self._packed[:5], self._packed[5], inputs)


def _dataset_hash(inputs, targets):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(inputs, dtype=float).tobytes())
    h.update(np.ascontiguousarray(targets, dtype=float).tobytes())
    return h.hexdigest()


def _fit_one(inputs, targets, params, k, index, encoded):
    rng = derive_rng(params.seed, "tree", index)
    M = targets.shape[0]
    rows = rng.integers(0, M, size=M) if params.bootstrap else np.arange(M)
    max_depth = np.iinfo(np.int64).max if params.max_depth is None else params.max_depth
    arrays = _cart.grow_tree(inputs, targets, rows.astype(np.int64), max_depth, params.min_samples_split,
                             params.min_samples_leaf, k, rng, *encoded)
    return Tree(*arrays)


def fit(inputs, targets, params, space=None, grid=None, n_threads=None):
    """Train ``params.n_trees`` trees on flattened pairs.

    Tree ``n`` draws its bootstrap rows and feature orders from its own stream
    ``derive_rng(seed, "tree", n)``, so the result does not depend on
    ``n_threads``.
    """
    inputs = np.ascontiguousarray(inputs, dtype=float)
    targets = np.ascontiguousarray(targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("need a non-empty 2-D input matrix")
    if targets.shape != (inputs.shape[0],):
        raise ValueError(f"targets shaped {targets.shape}, expected ({inputs.shape[0]},)")
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
        raise ValueError("training pairs must be finite")
    params.validate(inputs.shape[1])
    k = params.resolved_features(inputs.shape[1])
    encoded = _cart.encode_features(inputs)
    n_threads = n_threads or default_threads()
    if n_threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(lambda n: _fit_one(inputs, targets, params, k, n, encoded), range(params.n_trees)))
    else:
        trees = [_fit_one(inputs, targets, params, k, n, encoded) for n in range(params.n_trees)]
    fingerprint = {"dataset_sha256": _dataset_hash(inputs, targets), "n_pairs": int(inputs.shape[0])}
    return Forest(tuple(trees), params, inputs.shape[1], space, grid, fingerprint)


def fit_dataset(dataset, params, n_threads=None):
    inputs, targets = flatten_pairs(dataset)
    return fit(inputs, targets, params, dataset.space, dataset.grid, n_threads)


# ---------------------------------------------------------------- prediction


def _joint_inputs(forest, X, grid):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d_x = forest.n_features - grid.d_a
    if X.shape[1] != d_x:
        raise ValueError(f"design has {X.shape[1]} components, forest expects {d_x}")
    flat = grid.flat
    return np.hstack([np.repeat(X, flat.shape[0], axis=0), np.tile(flat, (X.shape[0], 1))])


def per_tree_responses(forest, X, grid=None):
    """Tree-wise discrete responses for several designs: ``(N, n_designs, d_y)``."""
    grid = grid or forest.grid
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = forest.predict_inputs(_joint_inputs(forest, X, grid))
    return out.reshape(forest.n_trees, X.shape[0], grid.d_y)


def per_tree_response(forest, x, grid=None):
    """``(N, d_y)`` matrix; row ``n`` is tree ``n``'s response on the grid."""
    return per_tree_responses(forest, np.asarray(x, dtype=float)[None, :], grid)[:, 0, :]


def _mean_variance(rows):
    mean = rows.mean(axis=0)
    var = ((rows - mean) ** 2).mean(axis=0)
    # exact agreement must read as zero variance even when the mean rounds
    var[rows.max(axis=0) == rows.min(axis=0)] = 0.0
    return mean, var


def predict_response(forest, x, grid=None):
    """Ensemble mean and variance of the discrete response, each length ``d_y``."""
    return _mean_variance(per_tree_response(forest, x, grid))


def predict_responses(forest, X, grid=None):
    return _mean_variance(per_tree_responses(forest, X, grid))


def predict_point(forest, x, a):
    x = np.asarray(x, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if x.size + a.size != forest.n_features:
        raise ValueError(f"(x, a) has {x.size + a.size} components, forest expects {forest.n_features}")
    if forest.grid is not None:
        lo = np.array([p.points[0] for p in forest.grid.axes])
        hi = np.array([p.points[-1] for p in forest.grid.axes])
        if np.any(a < lo) or np.any(a > hi):
            warnings.warn(f"query point {a} lies outside the trained grid range", stacklevel=2)
    return float(forest.predict_inputs(np.concatenate([x, a])[None, :])[:, 0].mean())


# ---------------------------------------------------------------- persistence


def _open(path, mode):
    path = Path(path)
    return gzip.open(path, mode + "t") if path.suffix == ".gz" else open(path, mode)


def save_forest(forest, path):
    """Versioned JSON with nested tree records; ``.gz`` suffix compresses."""
    doc = {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "params": asdict(forest.params),
        "n_features": forest.n_features,
        "space": forest.space.to_dict() if forest.space else None,
        "grid": forest.grid.to_dict() if forest.grid else None,
        "fingerprint": forest.fingerprint,
        "trees": [t.to_nested() for t in forest.trees],
    }
    with _open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_forest(path):
    try:
        with _open(path, "r") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, EOFError) as exc:
        raise ForestFormatError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != FOREST_FORMAT:
        raise ForestFormatError(f"{path} is not a forest model")
    if doc.get("version") != FOREST_VERSION:
        raise ForestFormatError(f"{path}: model version {doc.get('version')!r}, expected {FOREST_VERSION}")
    try:
        params = ForestParams(**doc["params"])
        n_features = int(doc["n_features"])
        space = DesignSpace.from_dict(doc["space"]) if doc.get("space") else None
        grid = QueryGrid.from_dict(doc["grid"]) if doc.get("grid") else None
        trees = tuple(Tree.from_nested(t) for t in doc["trees"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ForestFormatError(f"{path}: malformed model ({exc})") from exc
    if space is not None and grid is not None and space.d + grid.d_a != n_features:
        raise ForestFormatError(f"{path}: space ({space.d}) + grid ({grid.d_a}) != n_features ({n_features})")
    for t in trees:
        if np.any(t.feature >= n_features):
            raise ForestFormatError(f"{path}: tree splits on feature beyond input width {n_features}")
    try:
        return Forest(trees, params, n_features, space, grid, doc.get("fingerprint"))
    except ValueError as exc:
        raise ForestFormatError(f"{path}: {exc}") from exc
