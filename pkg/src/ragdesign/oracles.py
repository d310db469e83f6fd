"""Closed-form ground truth used in place of finite-element simulation.

* ``diatomic``: 1-D chain with alternating masses ``m1, m2`` joined by springs
  of stiffness ``kappa`` (lattice constant 1). Two branches, acoustic and
  optical, with a band gap ``(sqrt(2 kappa / m_max), sqrt(2 kappa / m_min))``
  at the zone edge.
* ``snap``: cubic stress-strain law ``k1 e - k2 e^2 + k3 e^3``; with
  ``k2^2 > 3 k1 k3`` it rises to a local maximum (snap-through threshold),
  dips, and recovers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .response import Axis, Dataset, DesignSpace, QueryGrid, VariableSpec, uniform_grid
from .rng import derive_rng


@dataclass(frozen=True)
class DiatomicDesign:
    m1: float
    m2: float
    kappa: float

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0 and self.kappa > 0):
            raise ValueError(f"masses and stiffness must be positive: {self}")


@dataclass(frozen=True)
class SnapDesign:
    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0 and self.k3 > 0):
            raise ValueError(f"coefficients must be positive: {self}")
        if not self.k2 ** 2 > 3 * self.k1 * self.k3:
            raise ValueError(f"k2^2 <= 3 k1 k3 for {self}: no distinct local max/min, snap-through degenerates")

    @property
    def strain_at_max(self):
        return (self.k2 - math.sqrt(self.k2 ** 2 - 3 * self.k1 * self.k3)) / (3 * self.k3)

    @property
    def strain_at_min(self):
        return (self.k2 + math.sqrt(self.k2 ** 2 - 3 * self.k1 * self.k3)) / (3 * self.k3)

    @property
    def threshold(self):
        return float(snap_stress(self, self.strain_at_max))

    @property
    def recrossing_strain(self):
        # third root of sigma(e) = sigma(e_max); e_max is a double root, roots sum to k2/k3
        return self.k2 / self.k3 - 2 * self.strain_at_max

    @property
    def stroke(self):
        return self.recrossing_strain - self.strain_at_max


def diatomic_dispersion(d, k):
    """``(omega_acoustic, omega_optical)`` at wave number(s) ``k`` in ``[0, pi]``."""
    k = np.asarray(k, dtype=float)
    s = 1.0 / d.m1 + 1.0 / d.m2
    q = 4.0 * np.sin(k / 2) ** 2 / (d.m1 * d.m2)
    # s^2 - q rewritten as a sum of squares: exact gap closure when m1 == m2
    root = np.sqrt((1.0 / d.m1 - 1.0 / d.m2) ** 2 + 4.0 * np.cos(k / 2) ** 2 / (d.m1 * d.m2))
    # acoustic branch via the product of roots: avoids cancellation near k = 0
    w_minus_sq = d.kappa * q / (s + root)
    w_plus_sq = d.kappa * (s + root)
    return np.sqrt(w_minus_sq), np.sqrt(w_plus_sq)


def diatomic_band_clear(d, lo, hi):
    """True when neither branch takes a value in ``(lo, hi)`` for any k.

    The acoustic branch spans ``[0, sqrt(2 kappa / m_max)]``, the optical one
    ``[sqrt(2 kappa / m_min), sqrt(2 kappa (1/m1 + 1/m2))]``.
    """
    acoustic_top = math.sqrt(2 * d.kappa / max(d.m1, d.m2))
    optical_bottom = math.sqrt(2 * d.kappa / min(d.m1, d.m2))
    optical_top = math.sqrt(2 * d.kappa * (1 / d.m1 + 1 / d.m2))
    return acoustic_top <= lo and (optical_bottom >= hi or optical_top <= lo)


def snap_stress(d, strain):
    e = np.asarray(strain, dtype=float)
    return d.k1 * e - d.k2 * e ** 2 + d.k3 * e ** 3


# ------------------------------------------------------------ default setups


def diatomic_space():
    return DesignSpace((VariableSpec("m1", 0.5, 4.0), VariableSpec("m2", 0.5, 4.0), VariableSpec("kappa", 0.5, 2.0)))


def diatomic_grid(n_k=61):
    k = uniform_grid([(0.0, math.pi)], [n_k]).axes[0].points
    return QueryGrid((Axis("band", (1.0, 2.0)), Axis("k", k)), band_axis=0)


def snap_space():
    return DesignSpace((VariableSpec("k1", 1.0, 4.0), VariableSpec("k2", 2.0, 6.0), VariableSpec("k3", 0.5, 2.0)))


def snap_grid(n_strain=31, max_strain=3.0):
    return uniform_grid([(0.0, max_strain)], [n_strain], names=["strain"])


def diatomic_response(x, grid):
    """Discrete response of design ``x = (m1, m2, kappa)`` on a (band, k) grid."""
    d = DiatomicDesign(*map(float, x))
    pts = grid.flat
    if grid.names != ["band", "k"]:
        raise ValueError(f"diatomic oracle needs axes ['band', 'k'], got {grid.names}")
    band = pts[:, 0]
    if not np.all(np.isin(band, (1.0, 2.0))):
        raise ValueError("diatomic chain has bands 1 and 2 only")
    lo, hi = diatomic_dispersion(d, pts[:, 1])
    return np.where(band == 1.0, lo, hi)


def snap_response(x, grid):
    if grid.d_a != 1:
        raise ValueError("snap oracle needs a one-axis strain grid")
    return snap_stress(SnapDesign(*map(float, x)), grid.flat[:, 0])


def snap_valid(X):
    X = np.atleast_2d(X)
    return X[:, 1] ** 2 > 3 * X[:, 0] * X[:, 2]


ORACLES = {
    "diatomic": {"space": diatomic_space, "grid": diatomic_grid, "response": diatomic_response,
                 "units": {"m1": "kg", "m2": "kg", "kappa": "N/m", "k": "rad", "value": "rad/s"}},
    "snap": {"space": snap_space, "grid": snap_grid, "response": snap_response,
             "units": {"k1": "MPa", "k2": "MPa", "k3": "MPa", "strain": "1", "value": "MPa"}},
}


def oracle_response(oracle, x, grid):
    try:
        return ORACLES[oracle]["response"](x, grid)
    except KeyError:
        raise ValueError(f"unknown oracle {oracle!r}; choose from {sorted(ORACLES)}") from None


def oracle_responses(oracle, X, grid):
    return np.array([oracle_response(oracle, x, grid) for x in np.atleast_2d(X)])


# ------------------------------------------------------------ sampling plans


def latin_hypercube(space, m, rng):
    """``m`` designs, one per equal-width stratum of every dimension.

    Integer dimensions map each unit-interval stratum onto the integer range
    ``lower..upper`` so that every integer value gets an equal share.
    """
    if m < 1:
        raise ValueError(f"need at least one sample, got {m}")
    u = qmc.LatinHypercube(d=space.d, seed=rng).random(m)
    X = space.lower + u * (space.upper - space.lower)
    ints = space.is_integer
    if np.any(ints):
        span = space.upper[ints] - space.lower[ints] + 1
        X[:, ints] = np.minimum(space.lower[ints] + np.floor(u[:, ints] * span), space.upper[ints])
    return X


def generate_dataset(oracle, space=None, grid=None, m=500, seed=0):
    """Latin-hypercube designs in ``space`` with oracle responses on ``grid``.

    Snap designs violating ``k2^2 > 3 k1 k3`` are rejected and redrawn from
    fresh hypercubes, so stratification is exact only for the diatomic oracle.
    """
    if oracle not in ORACLES:
        raise ValueError(f"unknown oracle {oracle!r}; choose from {sorted(ORACLES)}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    spec = ORACLES[oracle]
    space = space or spec["space"]()
    grid = grid or spec["grid"]()
    if space.d != 3:
        raise ValueError(f"{oracle} oracle takes 3 design variables, space has {space.d}")
    rng = derive_rng(seed, f"lhs:{oracle}")
    if oracle == "snap":
        kept = np.empty((0, space.d))
        for _ in range(1000):
            batch = latin_hypercube(space, m, rng)
            kept = np.vstack([kept, batch[snap_valid(batch)]])
            if kept.shape[0] >= m:
                break
        else:
            raise ValueError("snap space yields almost no designs with k2^2 > 3 k1 k3")
        X = kept[:m]
    else:
        X = latin_hypercube(space, m, rng)
    Y = oracle_responses(oracle, X, grid)
    return Dataset(space, grid, X, Y, dict(spec["units"], oracle=oracle))
