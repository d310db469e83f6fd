"""Likelihood of a snap-through requirement over probe designs as the
relative tolerance tightens; writes one CSV per tolerance."""

import argparse
from pathlib import Path

import numpy as np

from ragdesign.forest import ForestParams, fit_dataset
from ragdesign.likelihood import likelihood_map, write_likelihood_csv
from ragdesign.oracles import generate_dataset, latin_hypercube, snap_space
from ragdesign.requirements import Requirement, Segment
from ragdesign.rng import derive_rng


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--threshold", type=float, default=0.45)
    p.add_argument("--stroke", type=float, default=2.0)
    p.add_argument("--tols", default="0.25,0.15,0.05")
    p.add_argument("--n-probe", type=int, default=1000)
    p.add_argument("--out", default="runs/snap_map")
    p.add_argument("--seed", type=int, default=5)
    args = p.parse_args()

    ds = generate_dataset("snap", m=400, seed=args.seed)
    forest = fit_dataset(ds, ForestParams(n_trees=100, max_depth=15, seed=args.seed))
    probes = latin_hypercube(snap_space(), args.n_probe, derive_rng(args.seed, "probe"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print("rel_tol,mean_likelihood,max_likelihood,nonzero")
    for tol in (float(v) for v in args.tols.split(",")):
        req = Requirement((Segment("characteristic", extractor="threshold", target=args.threshold, rel_tol=tol),
                           Segment("characteristic", extractor="stroke", target=args.stroke, rel_tol=tol)))
        rows = likelihood_map(forest, forest.grid, req, probes)
        v = np.array([r[1] for r in rows])
        write_likelihood_csv(out / f"tol_{tol:g}.csv", rows, forest.space.names)
        print(f"{tol:g},{v.mean():.4f},{v.max():.2f},{int(np.sum(v > 0))}")


if __name__ == "__main__":
    main()
