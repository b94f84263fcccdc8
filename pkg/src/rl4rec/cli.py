"""Command-line entry point: ``rl4rec {run,eval,simfit,bench,gradcheck}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure
(divergence, non-finite values, or a failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import gradsuite
from .config import RunConfig, apply_overrides, eval_batch_size, load_config, set_key, validate
from .errors import ExhaustionError, NumericError, ProtocolError, ValidationError
from .harness import (CSV_HEADER, bench_table, build_simulators, evaluate_policy, fit_simulators,
                      format_bench, load_configured_dataset, load_params, make_agent,
                      run_experiment, save_simulator)

log = logging.getLogger("rl4rec")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set one config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rl4rec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train an agent and write its learning curve")
    p.add_argument("config", nargs="?", help="flat key = value config file")
    _common(p)

    p = sub.add_parser("eval", help="evaluate saved parameters on the evaluation simulator")
    p.add_argument("run_dir", help="directory written by `run` (config.cfg and params.mat)")
    p.add_argument("--batch", type=int, default=None, help="evaluation users (default: the run's eval_batch)")
    _common(p)

    p = sub.add_parser("simfit", help="fit and save training/evaluation simulators")
    p.add_argument("config", nargs="?")
    _common(p)

    p = sub.add_parser("bench", help="seconds per 1,000 training steps for every encoder")
    p.add_argument("config", nargs="?")
    p.add_argument("--steps", type=int, default=1_000)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=100)
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of all encoders and objectives")
    _common(p)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg = set_key(cfg, "seed", args.seed)
    if args.out is not None:
        cfg = set_key(cfg, "out", args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    result = run_experiment(cfg)
    last = result.points[-1]
    print(f"step {last.step}: mean clicks {last.mean_clicks:.4f} (std {last.std_clicks:.4f})")
    print(f"wrote {result.out_dir / 'curve.csv'}")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = apply_overrides(load_config(run_dir / "config.cfg"), args.override)
    if args.seed is not None:
        cfg = set_key(cfg, "seed", args.seed)
    validate(cfg)
    sims = build_simulators(cfg)
    agent = make_agent(cfg, sims.eval_env.n_items)
    load_params(agent, run_dir / "params.mat")
    batch = args.batch or eval_batch_size(cfg)
    point = evaluate_policy(agent, sims.eval_env, batch, cfg.seed * 1_000_003 + 17)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerow(point.row())
    print(f"mean clicks {point.mean_clicks:.4f} over {batch} users")
    print("per turn: " + " ".join(f"{x:.3f}" for x in point.per_turn))
    return 0


def cmd_simfit(args) -> int:
    cfg = _resolve_config(args)
    validate(cfg)
    if cfg.dataset.kind in ("tiny", "fitted"):
        raise ValidationError(f"simfit needs rating data; dataset.kind = {cfg.dataset.kind} has none")
    ds = load_configured_dataset(cfg)
    sims = fit_simulators(ds, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_simulator(out / "train_sim.mat", sims.train_model, sims.train_env.users, cfg.sim.threshold)
    save_simulator(out / "eval_sim.mat", sims.eval_model, sims.eval_env.users, cfg.sim.threshold)
    sims.propensities.save(out / "propensities.mat")
    test_rmse = sims.train_model.rmse(ds.test)
    print(f"training simulator MCAR-test RMSE {test_rmse:.4f}")
    print("use with:")
    print("  dataset.kind = fitted")
    print(f"  dataset.train_sim = {out / 'train_sim.mat'}")
    print(f"  dataset.eval_sim = {out / 'eval_sim.mat'}")
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve_config(args)
    validate(cfg)
    table = bench_table(cfg, args.steps, args.repeats, args.warmup)
    text = format_bench(table)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bench.csv").write_text(text)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradsuite.run_suite(seed=args.seed or 0)
    sys.stdout.write(gradsuite.format_results(results))
    failed = [r for r in results if not r.ok]
    worst = max(r.rel_error for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed, worst rel_err {worst:.3e}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "gradcheck.txt").write_text(gradsuite.format_results(results))
    return 0 if not failed else 2


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "simfit": cmd_simfit,
            "bench": cmd_bench, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ProtocolError, ExhaustionError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
