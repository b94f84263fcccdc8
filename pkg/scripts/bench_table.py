"""Training seconds per 1,000 steps for all seven encoders, on Yahoo!- and Coat-sized item sets.

    python scripts/bench_table.py --out runs/bench
"""

import argparse
from pathlib import Path

from rl4rec import harness
from rl4rec.config import RunConfig, apply_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=1_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--agent", default="dqn", choices=["dqn", "actor_critic"])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = apply_overrides(RunConfig(), [f"agent={args.agent}"])
    text = harness.format_bench(harness.bench_table(cfg, args.steps, args.repeats))
    print(text, end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"bench_{args.agent}.csv").write_text(text)


if __name__ == "__main__":
    main()
