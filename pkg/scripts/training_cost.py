"""Fit time against the number of training pairs and trees.

Average-case CART cost is about O(k M log M) per tree for M pairs and k
candidate features, so time / (N M log M) should stay roughly flat.
"""

import argparse
import math
import time

from ragdesign.forest import ForestParams, fit_dataset
from ragdesign.oracles import diatomic_grid, generate_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", default="50,100,200,400")
    p.add_argument("--trees", default="10,40")
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args()

    generate_dataset("diatomic", grid=diatomic_grid(5), m=5)  # numba warm-up below uses a tiny fit
    fit_dataset(generate_dataset("diatomic", grid=diatomic_grid(5), m=5), ForestParams(n_trees=1))
    print("m,pairs,trees,fit_s,us_per_tree_MlogM")
    for m in (int(v) for v in args.sizes.split(",")):
        ds = generate_dataset("diatomic", m=m, seed=1)
        M = ds.m * ds.grid.d_y
        for n in (int(v) for v in args.trees.split(",")):
            t0 = time.perf_counter()
            fit_dataset(ds, ForestParams(n_trees=n, max_depth=20, seed=1), n_threads=args.threads)
            el = time.perf_counter() - t0
            print(f"{m},{M},{n},{el:.2f},{1e6 * el / (n * M * math.log2(M)):.4f}")


if __name__ == "__main__":
    main()
