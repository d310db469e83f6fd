"""Design requirements as conjunctions of segments over a discrete response.

Segment modes:

``forbid``
    No grid point whose coordinates fall in ``axis_ranges`` may take a value
    strictly inside ``(value_lo, value_hi)`` (a partial stopband).
``require``
    Every group of grid points sharing the same non-band coordinates inside
    ``axis_ranges`` must have at least one member in ``[value_lo, value_hi]``
    (a partial passband). Without a band axis: at least one in-range point.
``tolerance``
    ``|y_i - targets_i| <= tolerances_i`` for every component.
``characteristic``
    A scalar feature of the curve (``threshold`` or ``stroke``) within
    ``rel_tol * |target|`` of ``target``.

All checks are vectorized over rows so one call scores every tree of a forest.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODES = ("forbid", "require", "tolerance", "characteristic")
EXTRACTORS = ("threshold", "stroke")


class RequirementError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    mode: str
    axis_ranges: dict = field(default_factory=dict)
    value_lo: float | None = None
    value_hi: float | None = None
    targets: tuple | None = None
    tolerances: tuple | None = None
    extractor: str | None = None
    target: float | None = None
    rel_tol: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise RequirementError(f"unknown segment mode {self.mode!r}")
        if self.mode in ("forbid", "require"):
            if self.value_lo is None or self.value_hi is None:
                raise RequirementError(f"{self.mode} segment needs value_lo and value_hi")
            if not self.value_lo < self.value_hi:
                raise RequirementError(f"{self.mode} segment needs value_lo < value_hi")
            ranges = {}
            for name, (lo, hi) in dict(self.axis_ranges or {}).items():
                if lo > hi:
                    raise RequirementError(f"axis range for {name!r} is inverted: ({lo}, {hi})")
                ranges[name] = (float(lo), float(hi))
            object.__setattr__(self, "axis_ranges", ranges)
        elif self.mode == "tolerance":
            if self.targets is None or self.tolerances is None:
                raise RequirementError("tolerance segment needs targets and tolerances")
            t = tuple(float(v) for v in self.targets)
            d = tuple(math.inf if v is None else float(v) for v in self.tolerances)
            if len(t) != len(d):
                raise RequirementError("targets and tolerances differ in length")
            if any(v < 0 or math.isnan(v) for v in d):
                raise RequirementError("tolerances must be >= 0")
            object.__setattr__(self, "targets", t)
            object.__setattr__(self, "tolerances", d)
        else:
            if self.extractor not in EXTRACTORS:
                raise RequirementError(f"characteristic segment needs extractor in {EXTRACTORS}")
            if self.target is None or self.rel_tol is None:
                raise RequirementError("characteristic segment needs target and rel_tol")
            if not 0 < self.rel_tol <= 1:
                raise RequirementError(f"rel_tol must lie in (0, 1], got {self.rel_tol}")

    def to_dict(self):
        out = {"mode": self.mode}
        if self.mode in ("forbid", "require"):
            out.update(axis_ranges={k: list(v) for k, v in self.axis_ranges.items()},
                       value_lo=self.value_lo, value_hi=self.value_hi)
        elif self.mode == "tolerance":
            out.update(targets=list(self.targets),
                       tolerances=[None if math.isinf(v) else v for v in self.tolerances])
        else:
            out.update(extractor=self.extractor, target=self.target, rel_tol=self.rel_tol)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "mode" not in data:
            raise RequirementError(f"segment must be an object with a 'mode': {data!r}")
        known = {"mode", "axis_ranges", "value_lo", "value_hi", "targets", "tolerances",
                 "extractor", "target", "rel_tol"}
        extra = set(data) - known
        if extra:
            raise RequirementError(f"unknown segment fields {sorted(extra)}")
        kw = dict(data)
        if "axis_ranges" in kw:
            kw["axis_ranges"] = {k: tuple(v) for k, v in kw["axis_ranges"].items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise RequirementError(str(exc)) from exc


@dataclass(frozen=True)
class Requirement:
    segments: tuple
    name: str = "requirement"

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise RequirementError("a requirement needs at least one segment")

    def to_dict(self):
        return {"name": self.name, "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or not isinstance(data.get("segments"), list):
            raise RequirementError("requirement must be an object with a 'segments' list")
        return cls(tuple(Segment.from_dict(s) for s in data["segments"]), data.get("name", "requirement"))


def load_requirement(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RequirementError(f"cannot read requirement {path}: {exc}") from exc
    return Requirement.from_dict(doc)


def save_requirement(req, path):
    Path(path).write_text(json.dumps(req.to_dict(), indent=2) + "\n")


# ------------------------------------------------------------ band segments


def _grouped(seg, Y, grid):
    """Reshape rows into ``(N, G, B)`` groups and the matching in-range mask ``(G, B)``.

    Groups share the non-band coordinates; ``B`` runs over the band axis (or
    is 1 without one). Groups with no in-range member are dropped.
    """
    mask = np.ones(grid.d_y, dtype=bool)
    pts = grid.flat
    for name, (lo, hi) in seg.axis_ranges.items():
        j = grid.axis_index(name)
        mask &= (pts[:, j] >= lo) & (pts[:, j] <= hi)
    if not mask.any():
        raise RequirementError(f"{seg.mode} segment {seg.axis_ranges} selects no grid point")
    N = Y.shape[0]
    if grid.band_axis is None:
        groups, gmask = Y[:, :, None], mask[:, None]
    else:
        shape = grid.shape
        b = grid.band_axis
        groups = np.moveaxis(Y.reshape((N,) + shape), b + 1, -1).reshape(N, -1, shape[b])
        gmask = np.moveaxis(mask.reshape(shape), b, -1).reshape(-1, shape[b])
    keep = gmask.any(axis=1)
    return groups[:, keep, :], gmask[keep]


def _group_scores(seg, Y, grid):
    """Per-group local condition ``(N, G)`` for forbid/require segments."""
    groups, gmask = _grouped(seg, Y, grid)
    if seg.mode == "forbid":
        inside = (groups > seg.value_lo) & (groups < seg.value_hi) & gmask
        return ~inside.any(axis=2)
    inside = (groups >= seg.value_lo) & (groups <= seg.value_hi) & gmask
    return inside.any(axis=2)


def _band_satisfied(seg, Y, grid):
    ok = _group_scores(seg, Y, grid)
    if seg.mode == "require" and grid.band_axis is None:
        return ok.any(axis=1)
    return ok.all(axis=1)


def _band_overlap(seg, Y, grid):
    ok = _group_scores(seg, Y, grid)
    if seg.mode == "require" and grid.band_axis is None:
        return ok.any(axis=1).astype(float)
    return ok.mean(axis=1)


# ------------------------------------------------------------ characteristics


def _strain_axis(grid):
    if grid.d_a != 1:
        raise RequirementError("threshold/stroke extraction needs a one-axis grid")
    if grid.d_y < 3:
        raise RequirementError("threshold/stroke extraction needs at least 3 grid points")
    return np.asarray(grid.axes[0].points)


def _first_true(mask):
    return mask.argmax(axis=1), mask.any(axis=1)


def extract_thresholds(Y, grid):
    """Row-wise snap-through threshold and its grid index; NaN / -1 without one.

    The threshold is the value at the first interior local maximum
    ``y[q-1] < y[q] >= y[q+1]``.
    """
    _strain_axis(grid)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    peak = (Y[:, 1:-1] > Y[:, :-2]) & (Y[:, 1:-1] >= Y[:, 2:])
    q, has = _first_true(peak)
    q = np.where(has, q + 1, -1)
    thr = np.where(has, Y[np.arange(Y.shape[0]), np.maximum(q, 0)], np.nan)
    return thr, q


def extract_strokes(Y, grid):
    """Row-wise stroke: strain from the threshold point to where the curve,
    after dipping below the threshold, first climbs back to it (linear
    interpolation between the bracketing grid points). NaN when undefined."""
    eps = _strain_axis(grid)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    thr, q = extract_thresholds(Y, grid)
    n = Y.shape[1]
    cols = np.arange(n)[None, :]
    has_q = q >= 0
    below = (cols > q[:, None]) & (Y < thr[:, None]) & has_q[:, None]
    dip, has_dip = _first_true(below)
    back = (cols > dip[:, None]) & (Y >= thr[:, None]) & has_dip[:, None]
    p, has_p = _first_true(back)
    rows = np.arange(Y.shape[0])
    p1 = np.maximum(p, 1)
    y0, y1 = Y[rows, p1 - 1], Y[rows, p1]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        frac = (thr - y0) / (y1 - y0)
    cross = eps[p1 - 1] + frac * (eps[p1] - eps[p1 - 1])
    return np.where(has_p, cross - eps[np.maximum(q, 0)], np.nan)


def extract_threshold(y, grid):
    thr, _ = extract_thresholds(np.asarray(y, dtype=float)[None, :], grid)
    return None if np.isnan(thr[0]) else float(thr[0])


def extract_stroke(y, grid):
    s = extract_strokes(np.asarray(y, dtype=float)[None, :], grid)
    return None if np.isnan(s[0]) else float(s[0])


def _characteristic_satisfied(seg, Y, grid):
    if seg.extractor == "threshold":
        v, _ = extract_thresholds(Y, grid)
    else:
        v = extract_strokes(Y, grid)
    with np.errstate(invalid="ignore"):
        return np.abs(v - seg.target) <= seg.rel_tol * abs(seg.target)


# ------------------------------------------------------------ public checks


def _check_rows(Y, grid):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != grid.d_y:
        raise RequirementError(f"responses have {Y.shape[1]} components, grid has {grid.d_y}")
    return Y


def segment_satisfied(seg, Y, grid):
    Y = _check_rows(Y, grid)
    if seg.mode in ("forbid", "require"):
        return _band_satisfied(seg, Y, grid)
    if seg.mode == "tolerance":
        if len(seg.targets) != grid.d_y:
            raise RequirementError(f"tolerance segment has {len(seg.targets)} targets, grid has {grid.d_y}")
        return np.all(np.abs(Y - np.asarray(seg.targets)) <= np.asarray(seg.tolerances), axis=1)
    return _characteristic_satisfied(seg, Y, grid)


def satisfied_rows(req, Y, grid):
    """Boolean per row of ``Y`` (shape ``(N, d_y)``): does the row meet every segment?"""
    Y = _check_rows(Y, grid)
    ok = np.ones(Y.shape[0], dtype=bool)
    for seg in req.segments:
        ok &= segment_satisfied(seg, Y, grid)
    return ok


def is_satisfied(req, y, grid):
    return bool(satisfied_rows(req, np.asarray(y, dtype=float)[None, :], grid)[0])


def overlap_rows(req, Y, grid):
    """Partial-credit score per row: mean over segments of the fraction of
    in-range groups meeting the local condition (1/0 for tolerance and
    characteristic segments)."""
    Y = _check_rows(Y, grid)
    scores = []
    for seg in req.segments:
        if seg.mode in ("forbid", "require"):
            scores.append(_band_overlap(seg, Y, grid))
        else:
            scores.append(segment_satisfied(seg, Y, grid).astype(float))
    return np.mean(scores, axis=0)


def overlap_rate(req, y, grid):
    return float(overlap_rows(req, np.asarray(y, dtype=float)[None, :], grid)[0])
