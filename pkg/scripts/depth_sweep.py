"""Train/test MSE of the diatomic forest as max_depth grows (plateau curve)."""

import argparse
import time

import numpy as np

from ragdesign.forest import ForestParams, fit_dataset, predict_responses
from ragdesign.metrics import mape, mse
from ragdesign.oracles import generate_dataset
from ragdesign.rng import derive_rng


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depths", default="5,10,15,20,25")
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()

    ds = generate_dataset("diatomic", m=args.m, seed=args.seed)
    perm = derive_rng(args.seed, "split").permutation(ds.m)
    train, test = ds.subset(np.sort(perm[args.n_test:])), ds.subset(np.sort(perm[:args.n_test]))
    print("max_depth,train_mse,test_mse,test_mape_pct,fit_s")
    for d in (int(v) for v in args.depths.split(",")):
        t0 = time.perf_counter()
        f = fit_dataset(train, ForestParams(n_trees=args.trees, max_depth=d, seed=args.seed))
        fit_s = time.perf_counter() - t0
        pred_tr = predict_responses(f, train.X)[0]
        pred_te = predict_responses(f, test.X)[0]
        print(f"{d},{mse(train.Y, pred_tr):.4e},{mse(test.Y, pred_te):.4e},{mape(test.Y, pred_te):.3f},{fit_s:.2f}")


if __name__ == "__main__":
    main()
