"""``rag`` command line: gen-data, train, predict, likelihood-map, design, evaluate.

Exit codes: 0 success, 2 input error, 3 requirement deemed unachievable.
Every command writes ``<output>.manifest.json`` next to its main output.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import forest as fo
from .likelihood import likelihood_map, write_likelihood_csv
from .metrics import evaluate_candidates, mape, mse, threshold_sweep, write_sweep_csv
from .oracles import ORACLES, diatomic_grid, generate_dataset, latin_hypercube, snap_grid
from .requirements import RequirementError, load_requirement
from .response import DatasetFormatError, read_dataset, read_descriptor, read_wide_dataset, write_dataset
from .rng import derive_rng
from .sampler import (AllZeroLikelihood, SamplerConfig, feasibility_scan, mh_sample, read_candidates_csv,
                      write_candidates_csv)

log = logging.getLogger("ragdesign")

EXIT_INPUT = 2
EXIT_UNACHIEVABLE = 3


class InputError(Exception):
    pass


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, args, inputs, outputs, started):
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.perf_counter() - started, 4),
        "artifact_hashes": {str(p): _sha256(p) for p in list(inputs) + list(outputs) if Path(p).is_file()},
    }
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _load_model(path):
    try:
        model = fo.load_forest(path)
    except fo.ForestFormatError as exc:
        raise InputError(str(exc)) from exc
    if model.space is None or model.grid is None:
        raise InputError(f"{path} carries no design space / grid")
    return model


def _load_dataset(args):
    try:
        if getattr(args, "wide", False):
            if not args.descriptor:
                raise InputError("--wide needs --descriptor")
            return read_wide_dataset(args.data, args.descriptor)
        return read_dataset(args.data, getattr(args, "descriptor", None))
    except DatasetFormatError as exc:
        raise InputError(str(exc)) from exc


def _designs(args, space):
    if args.design:
        X = np.array([_floats(args.design)])
    elif args.design_file:
        with open(args.design_file, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            X = np.array(rows[1:], dtype=float)
        except ValueError as exc:
            raise InputError(f"{args.design_file}: {exc}") from exc
    else:
        raise InputError("give --design or --design-file")
    if X.ndim != 2 or X.shape[1] != space.d:
        raise InputError(f"designs need {space.d} components")
    return X


# ------------------------------------------------------------------ commands


def cmd_gen_data(args):
    started = time.perf_counter()
    if args.oracle not in ORACLES:
        raise InputError(f"unknown oracle {args.oracle!r}")
    grid = diatomic_grid(args.nk) if args.oracle == "diatomic" else snap_grid(args.n_strain, args.max_strain)
    ds = generate_dataset(args.oracle, grid=grid, m=args.n, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, desc = write_dataset(ds, out.with_suffix(".csv"))
    _write_manifest(out, args, [], [csv_path, desc], started)
    print(f"wrote {ds.m} samples x {ds.grid.d_y} grid points to {csv_path}")
    return 0


def _split(m, fraction, seed):
    n_test = int(round(m * fraction))
    if fraction and not 0 < n_test < m:
        raise InputError(f"--test-split {fraction} leaves an empty train or test set for m={m}")
    perm = derive_rng(seed, "split").permutation(m)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _scores(model, ds):
    mean, _ = fo.predict_responses(model, ds.X)
    out = {"mse": mse(ds.Y, mean)}
    try:
        out["mape_pct"], out["mape_excluded"] = mape(ds.Y, mean, return_excluded=True)
    except ValueError:
        out["mape_pct"], out["mape_excluded"] = None, int(ds.Y.size)
    return out


def _params(args, max_depth):
    return fo.ForestParams(n_trees=args.trees, max_depth=max_depth, min_samples_split=args.min_samples_split,
                           min_samples_leaf=args.min_samples_leaf, features_per_split=args.features_per_split,
                           bootstrap=not args.no_bootstrap, seed=args.seed)


def _depth(text):
    return None if text.lower() in ("none", "unlimited") else int(text)


def cmd_train(args):
    started = time.perf_counter()
    ds = _load_dataset(args)
    train_idx, test_idx = _split(ds.m, args.test_split or 0.0, args.seed)
    train, test = ds.subset(train_idx), ds.subset(test_idx) if len(test_idx) else None
    try:
        params = _params(args, _depth(args.max_depth))
        model = fo.fit_dataset(train, params, n_threads=args.threads)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fo.save_forest(model, out)
    metrics = {"train": _scores(model, train), "n_train": train.m}
    if test is not None:
        metrics["test"] = _scores(model, test)
        metrics["n_test"] = test.m
    outputs = [out]
    metrics_path = Path(str(out) + ".metrics.json")
    metrics_path.write_text(json.dumps(metrics, indent=2) + "\n")
    outputs.append(metrics_path)
    for part in ("train", "test"):
        if part in metrics:
            s = metrics[part]
            mp = "n/a" if s["mape_pct"] is None else f"{s['mape_pct']:.3f}%"
            print(f"{part}: MSE {s['mse']:.6g}  MAPE {mp} ({s['mape_excluded']} zero targets skipped)")
    if args.depth_sweep:
        sweep_path = Path(str(out) + ".depth_sweep.csv")
        with open(sweep_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["max_depth", "train_mse", "test_mse"])
            for d in (int(v) for v in args.depth_sweep.split(",")):
                m_d = fo.fit_dataset(train, _params(args, d), n_threads=args.threads)
                row = [d, repr(_scores(m_d, train)["mse"]), repr(_scores(m_d, test)["mse"]) if test else ""]
                w.writerow(row)
                print(f"depth {d}: train MSE {row[1]}  test MSE {row[2] or 'n/a'}")
        outputs.append(sweep_path)
    _write_manifest(out, args, [args.data], outputs, started)
    return 0


def cmd_predict(args):
    started = time.perf_counter()
    model = _load_model(args.model)
    X = _designs(args, model.space)
    if not model.space.contains(X):
        if not args.allow_oob:
            raise InputError("design lies outside the design space (use --allow-oob to predict anyway)")
        log.warning("design outside the design space; trees extrapolate by leaf routing")
    grid = model.grid
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lead = ["design"] if X.shape[0] > 1 else []
        w.writerow(lead + [f"a_{j + 1}" for j in range(grid.d_a)] + ["mean", "variance", "lo2s", "hi2s"])
        band_rows = []
        for i, x in enumerate(X):
            mean, var = fo.predict_response(model, x, grid)
            sd = np.sqrt(var)
            for a, mu, v, s in zip(grid.flat, mean, var, sd):
                w.writerow(([i] if lead else []) + [repr(float(c)) for c in a]
                           + [repr(float(mu)), repr(float(v)), repr(float(mu - 2 * s)), repr(float(mu + 2 * s))])
            band_rows.append(sd)
    outputs = [out]
    if args.per_band_uncertainty:
        if grid.band_axis is None:
            raise InputError("--per-band-uncertainty needs a grid with a band axis")
        b = grid.band_axis
        bands_path = out.with_suffix(".bands.csv")
        with open(bands_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["band", "mean_2s"])
            sd = np.array(band_rows).reshape((X.shape[0],) + grid.shape)
            per_band = np.moveaxis(sd, b + 1, 0).reshape(grid.shape[b], -1).mean(axis=1) * 2
            for band, v in zip(grid.axes[b].points, per_band):
                w.writerow([repr(band), repr(float(v))])
        outputs.append(bands_path)
    _write_manifest(out, args, [args.model], outputs, started)
    return 0


def _requirement(path):
    try:
        return load_requirement(path)
    except RequirementError as exc:
        raise InputError(str(exc)) from exc


def cmd_likelihood_map(args):
    started = time.perf_counter()
    model = _load_model(args.model)
    req = _requirement(args.requirement)
    if args.probes:
        args.design, args.design_file = None, args.probes
        probe = _designs(args, model.space)
    else:
        probe = latin_hypercube(model.space, args.n_probe, derive_rng(args.seed, "probe"))
    try:
        rows = likelihood_map(model, model.grid, req, probe)
    except RequirementError as exc:
        raise InputError(str(exc)) from exc
    write_likelihood_csv(args.out, rows, model.space.names)
    _write_manifest(args.out, args, [args.model, args.requirement], [args.out], started)
    print(f"max likelihood {max(v for _, v in rows):.3f} over {len(rows)} probes")
    return 0


def cmd_design(args):
    started = time.perf_counter()
    model = _load_model(args.model)
    req = _requirement(args.requirement)
    per_chain = math.ceil(args.n / args.chains)
    try:
        cfg = SamplerConfig(c0=args.c0, n_samples=per_chain, burn_in=args.burn_in, thin=args.thin,
                            n_chains=args.chains, max_init_tries=args.max_init_tries, n_probe=args.n_probe,
                            seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    try:
        scan = feasibility_scan(model, model.grid, req, model.space, cfg.n_probe, cfg.seed)
        print(f"feasibility scan: max likelihood {scan[0]:.3f} over {cfg.n_probe} probes")
        cands = mh_sample(model, model.grid, req, model.space, cfg, scan=scan)[:args.n]
    except RequirementError as exc:
        raise InputError(str(exc)) from exc
    write_candidates_csv(args.out, cands, model.space.names)
    _write_manifest(args.out, args, [args.model, args.requirement], [args.out], started)
    lik = sorted((c.likelihood for c in cands), reverse=True)
    print(f"wrote {len(cands)} candidates to {args.out}; top likelihoods {lik[:5]}")
    return 0


def cmd_evaluate(args):
    started = time.perf_counter()
    if args.model:
        model = _load_model(args.model)
        space, grid = model.space, model.grid
    elif args.descriptor:
        try:
            space, grid, _ = read_descriptor(args.descriptor)
        except DatasetFormatError as exc:
            raise InputError(str(exc)) from exc
    else:
        raise InputError("give --model or --descriptor for the grid")
    req = _requirement(args.requirement)
    try:
        X, lik, _, _ = read_candidates_csv(args.candidates, space.d)
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read candidates: {exc}") from exc
    if X.shape[0] == 0:
        raise InputError("candidate file is empty")
    try:
        ev = evaluate_candidates(X, lik, args.oracle, grid, req)
    except (RequirementError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    thresholds = _floats(args.thresholds) if args.thresholds else list(np.round(np.linspace(0, 1, 11), 10))
    try:
        sweep = threshold_sweep(lik, ev.satisfied, ev.overlap, thresholds)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = Path(args.out)
    summary = out.with_suffix(".summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_candidates", "satisfaction_rate", "mean_overlap_rate", "mean_likelihood"])
        w.writerow([X.shape[0], repr(ev.satisfaction_rate), repr(ev.mean_overlap), repr(float(lik.mean()))])
    sweep_path = out.with_suffix(".sweep.csv")
    write_sweep_csv(sweep_path, sweep)
    _write_manifest(out, args, [args.candidates, args.requirement], [summary, sweep_path], started)
    print(f"satisfaction {ev.satisfaction_rate:.3f}  mean overlap {ev.mean_overlap:.3f}  ({X.shape[0]} designs)")
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="rag", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample designs and write oracle responses")
    g.add_argument("--oracle", required=True, choices=sorted(ORACLES))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--nk", type=int, default=61, help="wave numbers per band (diatomic)")
    g.add_argument("--n-strain", type=int, default=31, help="strain points (snap)")
    g.add_argument("--max-strain", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="fit the forest")
    t.add_argument("--data", required=True)
    t.add_argument("--descriptor")
    t.add_argument("--wide", action="store_true", help="one row per sample instead of long format")
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--max-depth", required=True, help="integer, or 'none' for unlimited")
    t.add_argument("--min-samples-split", type=int, default=2)
    t.add_argument("--min-samples-leaf", type=int, default=1)
    t.add_argument("--features-per-split", type=int)
    t.add_argument("--no-bootstrap", action="store_true")
    t.add_argument("--test-split", type=float)
    t.add_argument("--depth-sweep", help="comma-separated depths to refit and score")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=int, default=None)
    t.add_argument("--out", required=True, help="model JSON (.json or .json.gz)")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="mean, variance and +-2 sd band on the grid")
    r.add_argument("--model", required=True)
    r.add_argument("--design")
    r.add_argument("--design-file")
    r.add_argument("--allow-oob", action="store_true")
    r.add_argument("--per-band-uncertainty", action="store_true")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    lm = sub.add_parser("likelihood-map", help="likelihood at probe designs")
    lm.add_argument("--model", required=True)
    lm.add_argument("--requirement", required=True)
    lm.add_argument("--probes", help="CSV of designs; default Latin hypercube")
    lm.add_argument("--n-probe", type=int, default=1000)
    lm.add_argument("--seed", type=int, default=0)
    lm.add_argument("--out", required=True)
    lm.set_defaults(func=cmd_likelihood_map)

    d = sub.add_parser("design", help="sample candidate designs for a requirement")
    d.add_argument("--model", required=True)
    d.add_argument("--requirement", required=True)
    d.add_argument("--n", type=int, default=30)
    d.add_argument("--c0", type=float, default=0.25)
    d.add_argument("--burn-in", type=int, default=1000)
    d.add_argument("--thin", type=int, default=10)
    d.add_argument("--chains", type=int, default=4)
    d.add_argument("--max-init-tries", type=int, default=1000)
    d.add_argument("--n-probe", type=int, default=256)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--threads", type=int, default=None, help="accepted for symmetry; chains run serially")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("evaluate", help="oracle-validate candidates and sweep likelihood thresholds")
    e.add_argument("--candidates", required=True)
    e.add_argument("--requirement", required=True)
    e.add_argument("--oracle", required=True, choices=sorted(ORACLES))
    e.add_argument("--model")
    e.add_argument("--descriptor")
    e.add_argument("--thresholds")
    e.add_argument("--out", required=True, help="prefix; writes PREFIX.summary.csv and PREFIX.sweep.csv")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AllZeroLikelihood as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNACHIEVABLE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
