"""Learning curves for every encoder under one agent and dataset.

Writes ``<out>/<agent>/<encoder>/curve.csv`` per encoder and a ``final.csv``
summary. Extra ``--override key=value`` options go to every run, e.g. point
``dataset.kind`` at ``coat`` with its two file paths.

    python scripts/learning_curves.py --out runs/curves --steps 20000
    python scripts/learning_curves.py --agent actor_critic \\
        --override dataset.kind=coat --override dataset.train_path=coat/train.ascii \\
        --override dataset.test_path=coat/test.ascii
"""

import argparse
import csv
from pathlib import Path

from rl4rec import harness
from rl4rec.config import RunConfig, apply_overrides, set_key
from rl4rec.encoders import KINDS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agent", default="dqn", choices=["dqn", "actor_critic"])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--interval", type=int, default=1_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--encoders", nargs="+", default=list(KINDS))
    ap.add_argument("--override", action="append", default=[])
    ap.add_argument("--out", default="runs/curves")
    args = ap.parse_args()

    base = apply_overrides(RunConfig(), [f"agent={args.agent}", f"total_steps={args.steps}",
                                         f"eval_interval={args.interval}", f"seed={args.seed}",
                                         *args.override])
    # simulators depend only on data and seed, so fit them once
    sims = harness.build_simulators(base)
    out = Path(args.out) / args.agent
    rows = []
    for kind in args.encoders:
        cfg = set_key(set_key(base, "encoder.kind", kind), "out", str(out / kind))
        res = harness.run_experiment(cfg, sims=sims)
        rows.append([kind, f"{res.points[-1].mean_clicks:.4f}", f"{res.points[-1].std_clicks:.4f}"])
        print(f"{kind:>10}: final mean clicks {rows[-1][1]}")
    with open(out / "final.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["encoder", "mean_clicks", "std_clicks"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
