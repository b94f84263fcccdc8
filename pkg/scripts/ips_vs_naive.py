"""Held-out MCAR RMSE of IPS-weighted vs unweighted matrix factorisation on biased synthetic data.

    python scripts/ips_vs_naive.py --skews 0 0.5 1 1.5 --seeds 5
"""

import argparse

import numpy as np

from rl4rec.data import split_holdout, synth_biased
from rl4rec.simulator import MFConfig, estimate_propensities, train_preference_ips


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--skews", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--users", type=int, default=300)
    ap.add_argument("--items", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()

    mf = MFConfig(epochs=args.epochs)
    print("skew  ips_rmse  naive_rmse  ips_wins")
    for skew in args.skews:
        ips, naive = [], []
        for seed in range(args.seeds):
            ds = synth_biased(args.users, args.items, skew=skew, seed=seed).dataset
            held, mcar_slice = split_holdout(ds.test, 0.1, seed)
            prop = estimate_propensities(ds.train, mcar_slice, ds.n_users, ds.n_items)
            for debias, acc in ((True, ips), (False, naive)):
                m = train_preference_ips(ds.train, prop, debias, ds.n_users, ds.n_items, mf, seed)
                acc.append(m.rmse(held))
        wins = int(np.sum(np.array(ips) <= np.array(naive)))
        print(f"{skew:4.1f}  {np.mean(ips):8.4f}  {np.mean(naive):10.4f}  {wins}/{args.seeds}")


if __name__ == "__main__":
    main()
