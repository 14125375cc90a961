"""Command line: ``herlab train`` runs one seed, ``herlab aggregate`` summarizes several."""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import sys

import numpy as np

from .experiment import ALGOS, METRIC_FIELDS, read_metrics, resolve_config, run_experiment
from .envs.core import ENV_IDS

SUMMARY_FIELDS = tuple(f for f in METRIC_FIELDS if f != "epoch")


def aggregate(paths, out_path: str) -> int:
    """Per-epoch median, 33rd and 67th percentile of every metric over runs.

    Runs may have different lengths; an epoch is summarized over the runs that
    reached it. Returns the number of epochs written.
    """
    runs = [read_metrics(p) for p in paths]
    if not runs:
        raise ValueError("no metrics files to aggregate")
    n_epochs = max(len(r) for r in runs)
    header = ["epoch", "runs"]
    for name in SUMMARY_FIELDS:
        header += [f"{name}_median", f"{name}_p33", f"{name}_p67"]
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for e in range(n_epochs):
            rows = [r[e] for r in runs if len(r) > e]
            line = [str(e + 1), str(len(rows))]
            for name in SUMMARY_FIELDS:
                vals = np.array([getattr(r, name) for r in rows], dtype=float)
                line += [repr(float(v)) for v in (np.median(vals), np.percentile(vals, 33), np.percentile(vals, 67))]
            w.writerow(line)
    return n_epochs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="herlab", description="Goal-conditioned RL with hindsight relabeling.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one seed and write metrics.csv + manifest.txt")
    t.add_argument("--env", choices=ENV_IDS)
    t.add_argument("--algo", choices=ALGOS)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--config", help="key = value file with any ExperimentConfig field")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config field (repeatable)")
    t.add_argument("-v", "--verbose", action="store_true")

    a = sub.add_parser("aggregate", help="median / p33 / p67 per epoch over metrics files")
    a.add_argument("--glob", required=True, dest="pattern")
    a.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        overrides = {"env_id": args.env, "algo": args.algo, "seed": args.seed, "epochs": args.epochs}
        extra = {}
        for item in args.set:
            key, sep, val = item.partition("=")
            if not sep:
                raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
            extra[key.strip()] = val.strip()
        try:
            cfg = resolve_config(overrides, args.config, extra_text=extra)
        except ValueError as e:
            raise SystemExit(f"invalid config: {e}")
        path = run_experiment(cfg, args.out)
        print(path)
        return 0
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        raise SystemExit(f"no files match {args.pattern!r}")
    n = aggregate(paths, args.out)
    print(f"{args.out}: {n} epochs from {len(paths)} runs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
