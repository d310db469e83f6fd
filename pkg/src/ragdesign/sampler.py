"""Metropolis-Hastings sampling of designs from the tree-vote likelihood."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .likelihood import likelihood, likelihoods
from .oracles import latin_hypercube
from .rng import derive_rng


class AllZeroLikelihood(RuntimeError):
    """No positive-likelihood design could be found for the requirement."""

    def __init__(self, requirement_name, n_probe, tries):
        self.requirement_name = requirement_name
        super().__init__(
            f"requirement {requirement_name!r} looks unachievable: likelihood is zero at all "
            f"{n_probe} scan probes and {tries} random chain starts")


@dataclass(frozen=True)
class SamplerConfig:
    c0: float = 0.25
    n_samples: int = 30
    burn_in: int = 1000
    thin: int = 10
    n_chains: int = 4
    max_init_tries: int = 1000
    n_probe: int = 256
    seed: int = 0

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")
        if min(self.n_samples, self.burn_in, self.max_init_tries) < 0 or self.n_probe < 1:
            raise ValueError("counts must be non-negative (n_probe >= 1)")


@dataclass(frozen=True, eq=False)
class DesignCandidate:
    design: np.ndarray
    likelihood: float
    votes: np.ndarray
    chain_id: int
    step_index: int


def reflect(x, lower, upper):
    """Fold ``x`` back into ``[lower, upper]`` by mirror reflection at the bounds."""
    width = upper - lower
    t = np.mod(x - lower, 2 * width)
    return lower + np.where(t <= width, t, 2 * width - t)


def proposal_scale(space, c0):
    return c0 / math.sqrt(space.d) * np.abs(space.upper - space.lower)


def propose(x, space, c0, rng):
    """Gaussian step with per-dimension scale ``c0 * |u - l| / sqrt(d_x)``,
    reflected into the box. Integer dimensions are rounded before reflecting."""
    x = np.asarray(x, dtype=float)
    step = proposal_scale(space, c0) * rng.standard_normal(space.d)
    new = x + step
    ints = space.is_integer
    new[ints] = np.round(new[ints])
    return reflect(new, space.lower, space.upper)


def uniform_design(space, rng):
    u = rng.random(space.d)
    x = space.lower + u * (space.upper - space.lower)
    ints = space.is_integer
    span = space.upper[ints] - space.lower[ints] + 1
    x[ints] = np.minimum(space.lower[ints] + np.floor(u[ints] * span), space.upper[ints])
    return x


def feasibility_scan(forest, grid, req, space, n_probe, seed):
    """Max likelihood over ``n_probe`` Latin-hypercube probes and where it occurs."""
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    probes = latin_hypercube(space, n_probe, derive_rng(seed, "scan"))
    values, _ = likelihoods(forest, probes, grid, req)
    best = int(np.argmax(values))
    return float(values[best]), probes[best]


def _run_chain(target, space, cfg, chain_id, fallback):
    rng = derive_rng(cfg.seed, "chain", chain_id)
    x, res = None, None
    for _ in range(cfg.max_init_tries):
        cand = uniform_design(space, rng)
        r = target(cand)
        if r.value > 0:
            x, res = cand, r
            break
    if x is None:
        if fallback is None:
            return None
        x = np.array(fallback, dtype=float)
        res = target(x)

    out = []
    n_steps = cfg.burn_in + cfg.n_samples * cfg.thin
    for step in range(1, n_steps + 1):
        new = propose(x, space, cfg.c0, rng)
        new_res = target(new)
        if res.value == 0 or new_res.value >= res.value:
            accept = True
        else:
            accept = rng.random() < new_res.value / res.value
        if accept:
            x, res = new, new_res
        if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            out.append(DesignCandidate(x.copy(), res.value, res.votes.copy(), chain_id, step))
    return out


def run_chains(target, space, cfg, fallback=None, name="requirement"):
    """Metropolis-Hastings over ``target(x) -> LikelihoodResult``.

    Chain starts are uniform draws retried until the likelihood is positive,
    then ``fallback`` if given. While the current likelihood is zero every
    proposal is accepted (blind reflected random walk).
    """
    candidates = []
    for c in range(cfg.n_chains):
        chain = _run_chain(target, space, cfg, c, fallback)
        if chain is None:
            raise AllZeroLikelihood(name, 0, cfg.max_init_tries)
        candidates.extend(chain)
    return candidates


def mh_sample(forest, grid, req, space, cfg, scan=None):
    """Sample ``cfg.n_samples`` designs per chain from the likelihood of ``req``.

    ``scan`` is a precomputed :func:`feasibility_scan` result; one is run when
    omitted. Raises :class:`AllZeroLikelihood` when the scan finds nothing
    and no chain start has positive likelihood.
    """
    space = space or forest.space
    grid = grid or forest.grid
    if scan is None:
        scan = feasibility_scan(forest, grid, req, space, cfg.n_probe, cfg.seed)
    best, argmax = scan
    cache = {}

    def target(x):
        key = x.tobytes()
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = likelihood(forest, x, grid, req)
        return hit

    try:
        return run_chains(target, space, cfg, fallback=argmax if best > 0 else None, name=req.name)
    except AllZeroLikelihood:
        raise AllZeroLikelihood(req.name, cfg.n_probe, cfg.max_init_tries) from None


def write_candidates_csv(path, candidates, names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["likelihood", "chain_id", "step_index"])
        for c in candidates:
            w.writerow([repr(float(v)) for v in c.design] + [repr(float(c.likelihood)), c.chain_id, c.step_index])


def read_candidates_csv(path, d_x):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[d_x:] != ["likelihood", "chain_id", "step_index"] or len(header) != d_x + 3:
        raise ValueError(f"{path}: unexpected candidate header {header}")
    X = np.array([[float(v) for v in r[:d_x]] for r in body]).reshape(len(body), d_x)
    lik = np.array([float(r[d_x]) for r in body])
    return X, lik, [int(r[d_x + 1]) for r in body], [int(r[d_x + 2]) for r in body]
