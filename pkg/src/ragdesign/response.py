"""Design spaces, query grids and datasets of discretized functional responses.

A response ``y`` is a function sampled on the flat point list of a
:class:`QueryGrid`; the flat order is row-major over the grid axes. Training
rows for the forest are the "uncurried" pairs ``(x, a_q) -> y_q``.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DESCRIPTOR_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    name: str
    lower: float
    upper: float
    kind: str = "continuous"

    def __post_init__(self):
        if self.kind not in ("continuous", "integer"):
            raise ValueError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"variable {self.name!r}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"variable {self.name!r}: need lower < upper, got [{self.lower}, {self.upper}]")
        if self.kind == "integer" and not (float(self.lower).is_integer() and float(self.upper).is_integer()):
            raise ValueError(f"integer variable {self.name!r} needs integral bounds")


@dataclass(frozen=True)
class DesignSpace:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if len(self.dims) < 1:
            raise ValueError("design space needs at least one variable")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")

    @property
    def d(self):
        return len(self.dims)

    @property
    def names(self):
        return [d.name for d in self.dims]

    @cached_property
    def lower(self):
        return np.array([d.lower for d in self.dims], dtype=float)

    @cached_property
    def upper(self):
        return np.array([d.upper for d in self.dims], dtype=float)

    @cached_property
    def is_integer(self):
        return np.array([d.kind == "integer" for d in self.dims], dtype=bool)

    def contains(self, x):
        """True when every row of ``x`` lies in the box and integer dims are integral."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            return False
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        integral = np.all(~self.is_integer | (np.round(x) == x), axis=1)
        return bool(np.all(inside & integral))

    def check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"design has {x.shape[-1]} components, space has {self.d}")
        return x

    def to_dict(self):
        return {"dims": [{"name": d.name, "kind": d.kind, "lower": d.lower, "upper": d.upper} for d in self.dims]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(VariableSpec(v["name"], float(v["lower"]), float(v["upper"]), v.get("kind", "continuous"))
                         for v in data["dims"]))


@dataclass(frozen=True)
class Axis:
    name: str
    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 1:
            raise ValueError(f"axis {self.name!r} has no points")
        if any(not math.isfinite(p) for p in pts):
            raise ValueError(f"axis {self.name!r} has non-finite points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError(f"axis {self.name!r} points must be strictly increasing")


@dataclass(frozen=True)
class QueryGrid:
    """Tensor-product grid of query points.

    ``band_axis`` marks an axis that enumerates multiple response branches at
    the same remaining coordinates (band index of a dispersion relation).
    """

    axes: tuple
    band_axis: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) < 1:
            raise ValueError("grid needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names in {names}")
        if self.band_axis is not None and not 0 <= self.band_axis < len(self.axes):
            raise ValueError(f"band_axis {self.band_axis} out of range")

    @property
    def names(self):
        return [a.name for a in self.axes]

    @property
    def shape(self):
        return tuple(len(a.points) for a in self.axes)

    @property
    def d_a(self):
        return len(self.axes)

    @property
    def d_y(self):
        return int(np.prod(self.shape))

    def axis_index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"grid has no axis named {name!r} (axes: {self.names})") from None

    @cached_property
    def flat(self):
        """``(d_y, d_a)`` array of query points in row-major order."""
        mesh = np.meshgrid(*[np.asarray(a.points) for a in self.axes], indexing="ij")
        out = np.stack([m.reshape(-1) for m in mesh], axis=1)
        out.flags.writeable = False
        return out

    def flat_index(self, multi_index):
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def to_dict(self):
        return {"axes": [{"name": a.name, "points": list(a.points)} for a in self.axes],
                "band_axis": self.band_axis}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(Axis(a["name"], tuple(a["points"])) for a in data["axes"]), data.get("band_axis"))


def uniform_grid(axis_bounds, counts, band_axis=None, names=None):
    """Grid with ``counts[j]`` equidistant points on each ``axis_bounds[j]``, endpoints included."""
    if len(axis_bounds) != len(counts):
        raise ValueError("axis_bounds and counts differ in length")
    names = names or [f"a_{j + 1}" for j in range(len(counts))]
    axes = []
    for name, (lo, hi), n in zip(names, axis_bounds, counts):
        if int(n) != n or n < 1:
            raise ValueError(f"axis {name!r}: point count must be a positive integer, got {n}")
        if n > 1 and not lo < hi:
            raise ValueError(f"axis {name!r}: inverted bounds ({lo}, {hi})")
        if n == 1 and lo > hi:
            raise ValueError(f"axis {name!r}: inverted bounds ({lo}, {hi})")
        pts = (float(lo),) if n == 1 else tuple(np.linspace(lo, hi, int(n)))
        axes.append(Axis(name, pts))
    return QueryGrid(tuple(axes), band_axis)


@dataclass(frozen=True)
class ResponseSample:
    design: np.ndarray
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """``m`` designs ``X`` (m, d_x) with responses ``Y`` (m, d_y) on ``grid``."""

    space: DesignSpace
    grid: QueryGrid
    X: np.ndarray
    Y: np.ndarray
    units: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        Y = np.array(self.Y, dtype=float, ndmin=2)
        if X.shape[1] != self.space.d:
            raise ValueError(f"designs have {X.shape[1]} columns, space has {self.space.d}")
        if Y.shape != (X.shape[0], self.grid.d_y):
            raise ValueError(f"responses shaped {Y.shape}, expected {(X.shape[0], self.grid.d_y)}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("responses must be finite")
        if not self.space.contains(X):
            raise ValueError("some designs lie outside the design space")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def samples(self):
        return [ResponseSample(x, y) for x, y in zip(self.X, self.Y)]

    def subset(self, idx):
        return Dataset(self.space, self.grid, self.X[idx], self.Y[idx], dict(self.units))


def flatten_pairs(dataset):
    """Uncurried training rows: ``inputs`` (m*d_y, d_x+d_a) and ``targets`` (m*d_y,).

    Sample-major then grid-major: row ``i*d_y + q`` is ``(x_i, a_q) -> y_iq``.
    """
    if dataset.m == 0:
        raise ValueError("dataset is empty")
    d_y = dataset.grid.d_y
    inputs = np.hstack([np.repeat(dataset.X, d_y, axis=0), np.tile(dataset.grid.flat, (dataset.m, 1))])
    return inputs, dataset.Y.reshape(-1).copy()


def unflatten_pairs(inputs, targets, d_x, d_y):
    """Inverse of :func:`flatten_pairs`: regroup rows into ``(X, Y)``."""
    inputs = np.asarray(inputs)
    if inputs.shape[0] % d_y:
        raise ValueError(f"{inputs.shape[0]} rows is not a multiple of d_y={d_y}")
    X = inputs[::d_y, :d_x].copy()
    Y = np.asarray(targets).reshape(-1, d_y).copy()
    return X, Y


# ---------------------------------------------------------------- file I/O


def descriptor_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def _fmt(v):
    return repr(float(v))


def write_descriptor(path, space, grid, units=None, **extra):
    doc = {"version": DESCRIPTOR_VERSION, "space": space.to_dict(), "grid": grid.to_dict(),
           "units": units or {}}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_descriptor(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"cannot read descriptor {path}: {exc}") from exc
    if doc.get("version") != DESCRIPTOR_VERSION:
        raise DatasetFormatError(f"descriptor {path}: unsupported version {doc.get('version')!r}")
    try:
        return DesignSpace.from_dict(doc["space"]), QueryGrid.from_dict(doc["grid"]), doc.get("units", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"descriptor {path}: {exc}") from exc


def write_dataset(dataset, csv_path):
    """Long-format CSV (one row per sample and grid point) plus JSON descriptor."""
    csv_path = Path(csv_path)
    d_x, d_a = dataset.space.d, dataset.grid.d_a
    header = [f"x_{j + 1}" for j in range(d_x)] + [f"a_{j + 1}" for j in range(d_a)] + ["value"]
    inputs, targets = flatten_pairs(dataset)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, v in zip(inputs, targets):
            w.writerow([_fmt(c) for c in row] + [_fmt(v)])
    write_descriptor(descriptor_path(csv_path), dataset.space, dataset.grid, dataset.units)
    return csv_path, descriptor_path(csv_path)


def _load_numeric_csv(path, n_cols):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DatasetFormatError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) != n_cols:
        raise DatasetFormatError(f"{path}: expected {n_cols} columns, header has {len(header)}")
    try:
        data = np.array(body, dtype=float).reshape(len(body), n_cols)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: non-numeric or ragged rows ({exc})") from exc
    return header, data


def read_dataset(csv_path, descriptor=None):
    """Read a long-format dataset; the descriptor defaults to the sibling ``.json``."""
    space, grid, units = read_descriptor(descriptor or descriptor_path(csv_path))
    d_x, d_a, d_y = space.d, grid.d_a, grid.d_y
    _, data = _load_numeric_csv(csv_path, d_x + d_a + 1)
    if data.shape[0] == 0 or data.shape[0] % d_y:
        raise DatasetFormatError(f"{csv_path}: {data.shape[0]} rows is not a positive multiple of d_y={d_y}")
    m = data.shape[0] // d_y
    block = data.reshape(m, d_y, -1)
    if not np.array_equal(block[:, :, d_x:d_x + d_a], np.broadcast_to(grid.flat, (m, d_y, d_a))):
        raise DatasetFormatError(f"{csv_path}: query-point columns do not follow the grid order")
    if np.any(block[:, :, :d_x] != block[:, :1, :d_x]):
        raise DatasetFormatError(f"{csv_path}: design columns change within a sample block")
    try:
        return Dataset(space, grid, block[:, 0, :d_x], block[:, :, -1], units)
    except ValueError as exc:
        raise DatasetFormatError(f"{csv_path}: {exc}") from exc


def read_wide_dataset(csv_path, descriptor):
    """Read one-row-per-sample CSV (``x_1..x_dx`` then ``d_y`` values in grid order)."""
    space, grid, units = read_descriptor(descriptor)
    _, data = _load_numeric_csv(csv_path, space.d + grid.d_y)
    try:
        return Dataset(space, grid, data[:, :space.d], data[:, space.d:], units)
    except ValueError as exc:
        raise DatasetFormatError(f"{csv_path}: {exc}") from exc
