#!/usr/bin/env python3
"""Run bundled scenarios over a range of seeds and tabulate the outcome.

Example::

    python3 scripts/sweep.py sim43 --seeds 0 10 --output sweep-out
"""
import argparse
import csv
import sys
import time
from dataclasses import replace

import numpy as np

from phipursuit.harness import run_scenario
from phipursuit.scenarios import SCENARIOS, get_scenario
from phipursuit.optimizer import angle_deg


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenarios", nargs="+", choices=sorted(SCENARIOS))
    ap.add_argument("--seeds", type=int, nargs=2, default=(0, 5), metavar=("FIRST", "STOP"))
    ap.add_argument("--n", type=int)
    ap.add_argument("--output", default="sweep-out")
    args = ap.parse_args(argv)

    rows = []
    for name in args.scenarios:
        kw = {"n": args.n} if args.n else {}
        for seed in range(*args.seeds):
            cfg = get_scenario(name, **kw).with_seed(seed)
            cfg = replace(cfg, output_dir=args.output)
            t0 = time.perf_counter()
            art = run_scenario(cfg)
            doc = art.document
            row = {"scenario": name, "seed": seed, "status": doc["status"], "k": None, "angle_deg": None,
                   "seconds": round(time.perf_counter() - t0, 1)}
            if doc["pursuit"]:
                levels = doc["pursuit"]["model"]["levels"]
                row["k"] = len(levels)
                truth = cfg.truth.get("directions")
                if levels and truth:
                    row["angle_deg"] = round(angle_deg(np.asarray(levels[0]["direction"]), np.asarray(truth[0])), 2)
            rows.append(row)
            print(row, flush=True)

    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
