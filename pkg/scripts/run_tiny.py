"""Train DQN on the tiny environment for several seeds and print the final clicks.

    python scripts/run_tiny.py --steps 50000 --seeds 0 1 2 3 4 --encoder Avg
"""

import argparse
import time

from rl4rec import harness
from rl4rec.config import RunConfig, apply_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=50_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--encoder", default="Avg")
    ap.add_argument("--agent", default="dqn", choices=["dqn", "actor_critic"])
    ap.add_argument("--eval-interval", type=int, default=5_000)
    args = ap.parse_args()

    for seed in args.seeds:
        cfg = apply_overrides(RunConfig(), [
            "dataset.kind=tiny", f"seed={seed}", f"total_steps={args.steps}",
            f"eval_interval={args.eval_interval}", f"encoder.kind={args.encoder}", f"agent={args.agent}"])
        t0 = time.perf_counter()
        res = harness.run_experiment(cfg, write=False)
        curve = " ".join(f"{p.mean_clicks:.2f}" for p in res.points)
        print(f"seed {seed}: final {res.points[-1].mean_clicks:.3f} "
              f"({time.perf_counter() - t0:.0f}s)  curve: {curve}")


if __name__ == "__main__":
    main()
