"""Command-line entry point: ``nptlab {etf,gradcheck,train,b2n,sweep,plot}``.

Exit codes: 0 success, 1 argument error, 2 numerical abort or failed check,
3 partial sweep failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _config(args):
    from .experiment import ExperimentConfig

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_etf(args) -> int:
    from .geometry import build_etf, etf_target_gram

    frame = build_etf(args.K, args.d, args.seed)
    G = frame.gram()
    dev = float(np.abs(G - etf_target_gram(args.K)).max())
    col_sum = float(np.abs(frame.columns.sum(axis=1)).max())
    np.set_printoptions(precision=6, suppress=True, linewidth=120)
    print(f"simplex ETF K={args.K} d={args.d} seed={args.seed}")
    print("Gram matrix:")
    print(G)
    print(f"max |Gram - target| = {dev:.3e}; max |column sum| = {col_sum:.3e}")
    return EXIT_OK if dev <= 1e-9 and col_sum <= 1e-9 else EXIT_NUMERIC


def _toy_batch(cfg, tau, seed):
    from .experiment import prepare_cell
    from .losses import Batch

    cell = prepare_cell(cfg, tau, seed)
    return cell, Batch.from_global(cell.train_set.raw_features, cell.train_set.labels, cell.split.base_ids)


def cmd_gradcheck(args) -> int:
    from .losses import LossWeights, grad_check

    cfg = _config(args)
    cell, batch = _toy_batch(cfg, args.tau, args.seed)
    params = cell.params
    if args.vision_prompt:
        from .model import with_config
        params = with_config(params, vision_prompt_enabled=True)
        params.vision_prompt = 0.1 * np.random.default_rng(args.seed).standard_normal(params.vision_prompt.shape)
    w = LossWeights(args.w1, args.w2)
    rep = grad_check(params, batch, w, step=args.step)
    print(json.dumps({"max_rel_error": rep.max_rel_error, "worst_param": rep.worst_param,
                      "worst_index": rep.worst_index, "analytic": rep.analytic, "numeric": rep.numeric,
                      "n_checked": rep.n_checked, "step": rep.step}, indent=2))
    return EXIT_OK if rep.ok(args.tol) else EXIT_NUMERIC


def cmd_train(args) -> int:
    from .model import save_checkpoint
    from .train import evaluate, harmonic_mean, train

    cfg = _config(args)
    cell, _ = _toy_batch(cfg, args.tau, args.seed)
    tcfg = replace(cfg.train, method=args.method, seed=args.seed)
    trained, traj = train(cell.params, cell.train_set, tcfg, class_ids=cell.split.base_ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out / "trajectory.csv")
    save_checkpoint(trained, out / "checkpoint.npz")
    b = evaluate(trained, cell.test_base, cell.split.base_ids)
    n = evaluate(trained, cell.test_novel, cell.split.novel_ids)
    print(json.dumps({"base_acc": b, "novel_acc": n, "harmonic_mean": harmonic_mean(b, n),
                      "final_loss": traj.rows[-1]["loss_total"], "out": str(out)}, indent=2))
    return EXIT_OK


def cmd_b2n(args) -> int:
    from .experiment import ExperimentReport, run_base_to_novel

    cfg = _config(args)
    row = run_base_to_novel(cfg, args.tau, args.method, args.seed)
    print(json.dumps(row, indent=2, default=float))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "runs.csv").write_text(ExperimentReport([row], cfg).to_csv())
    return EXIT_OK if row["status"] == "ok" else EXIT_NUMERIC


def cmd_sweep(args) -> int:
    from .experiment import run_sweep

    cfg = _config(args)
    if args.tau is not None:
        cfg = replace(cfg, taus=(args.tau,))
    if args.method is not None:
        cfg = replace(cfg, methods=(args.method,))
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    report = run_sweep(cfg, out_dir=cfg.out_dir)
    for g in report.aggregates()["groups"]:
        print(f"tau={g['tau']:<5g} {g['method']:<8} w=({g['w1']:g},{g['w2']:g}) n={g['n_ok']:<3d} "
              f"HM={g['mean_harmonic_mean']:.4f}±{g['std_harmonic_mean']:.4f} "
              f"novel LCD={g['mean_novel_delta_lcd']:.4f} novel MID err={g['mean_novel_mid_error']:.4f}")
    print(f"wrote {cfg.out_dir}")
    return EXIT_PARTIAL if report.n_failed else EXIT_OK


def cmd_plot(args) -> int:
    from .experiment import ExperimentReport, emit_plots

    src = Path(args.csv) if args.csv else Path(args.out) / "runs.csv"
    report = ExperimentReport.from_csv(src)
    for p in emit_plots(report, args.out or src.parent):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nptlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default=None):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--tau", type=float, default=None)
        sp.add_argument("--method", choices=("baseline", "npt"), default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--workers", type=int, default=None)

    s = sub.add_parser("etf", help="build and verify a simplex ETF")
    s.add_argument("--K", type=int, default=4)
    s.add_argument("--d", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_etf)

    s = sub.add_parser("gradcheck", help="finite-difference check of the prompt gradients")
    common(s)
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--w1", type=float, default=0.3)
    s.add_argument("--w2", type=float, default=0.8)
    s.add_argument("--vision-prompt", action="store_true")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("train", help="train one model and save its trajectory and checkpoint")
    common(s, "train_out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("b2n", help="one base-to-novel run")
    common(s)
    s.set_defaults(func=cmd_b2n)

    s = sub.add_parser("sweep", help="full (tau, method, seed) grid")
    common(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("plot", help="re-render figures from runs.csv")
    s.add_argument("--out", default=None, help="directory holding runs.csv (and receiving figures)")
    s.add_argument("--csv", default=None)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("tau", 0.01), ("method", "npt"), ("seed", 0)):
        if args.command in ("gradcheck", "train", "b2n") and getattr(args, name, None) is None:
            setattr(args, name, default)
    if args.command == "plot" and not (args.out or args.csv):
        print("nptlab plot: need --out or --csv", file=sys.stderr)
        return EXIT_ARGS
    from .train import NumericalAbort

    try:
        return args.func(args)
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
