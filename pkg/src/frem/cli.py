"""Command-line entry point.

Subcommands::

    frem simulate   estimator accuracy study on a Gaussian design -> CSV
    frem generate   write the synthetic biased classification task -> CSV
    frem train      train with a fairness penalty, evaluate on held-out data
    frem audit      re-evaluate a saved model
    frem gradcheck  finite-difference check of all analytic gradients

Exit codes: 0 success, 1 runtime or check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import gradcheck as _gradcheck
from .data import (
    ScalingParams,
    apply_scaling,
    load_csv,
    make_biased_classification,
    minmax_scale,
    split,
    write_csv,
    CsvParseError,
)
from .kernels import SmoothingKernelSpec
from .net import Network
from .simulation import CSV_HEADER, SimulationSetup, run_simulation
from .trainer import TrainConfig, TrainingDivergedError, evaluate, select_bandwidth, train_frem

logger = logging.getLogger("frem")

SPLIT = (0.8, 0.2)


class UsageError(Exception):
    pass


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="estimator accuracy study")
    p.add_argument("--design", choices=["1d", "multi"], required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=1, help="representation dimension (multi design)")
    p.add_argument("--rho", type=float, default=None,
                   help="correlation; default 0.4 (1d) or 1/(3 sqrt(m)) (multi)")
    p.add_argument("--w1", type=float, default=0.5**0.5, help="encoder weight on X1 (1d design)")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--estimator", choices=["proposed", "binning", "nw"], default="proposed")
    p.add_argument("--gamma", type=float, nargs="+", default=None)
    p.add_argument("--bins", type=int, nargs="+", default=None)
    p.add_argument("--kernel", choices=["rbf", "triangular", "epanechnikov"], default="rbf")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--R", type=int, default=1000, help="importance samples for the NW estimator")
    p.add_argument("--truth-n", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="CSV path (stdout if omitted)")


def _add_train_flags(p):
    p.add_argument("--task", choices=["classification", "regression"], default="classification")
    p.add_argument("--fairness", choices=["dp", "eo"], default="dp")
    p.add_argument("--regularizer", choices=["frem", "reg-gdp", "none"], default="frem")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--select-gamma", action="store_true",
                   help="choose gamma on a validation split of the training data")
    p.add_argument("--kernel", choices=["rbf", "triangular", "epanechnikov"], default="rbf")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--hidden", type=int, default=50)
    p.add_argument("--rep-dim", type=int, default=50)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)

    g = sub.add_parser("generate", help="write the synthetic biased classification task")
    g.add_argument("--n", type=int, default=4000)
    g.add_argument("--d", type=int, default=5)
    g.add_argument("--corr", type=float, default=0.6)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("train", help="train and evaluate on a held-out split")
    t.add_argument("--data", type=Path, required=True)
    _add_train_flags(t)
    t.add_argument("--eval-gamma", type=float, default=0.1, help="bandwidth for GDP/GEO")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-model", type=Path, required=True)
    t.add_argument("--out-report", type=Path, required=True)

    a = sub.add_parser("audit", help="evaluate a saved model")
    a.add_argument("--model", type=Path, required=True)
    a.add_argument("--data", type=Path, required=True)
    a.add_argument("--out-report", type=Path, required=True)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-seeds", type=int, default=10)
    return parser


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.estimator == "binning":
        if not args.bins or args.gamma:
            raise UsageError("binning takes --bins and no --gamma")
        params = args.bins
    else:
        if not args.gamma or args.bins:
            raise UsageError(f"{args.estimator} takes --gamma and no --bins")
        params = args.gamma
    if args.design == "1d":
        if args.m != 1:
            raise UsageError("--m applies to the multi design only")
        rho = 0.4 if args.rho is None else args.rho
    else:
        rho = 1.0 / (3.0 * args.m**0.5) if args.rho is None else args.rho
    try:
        setup = SimulationSetup(args.design, args.n, rho, args.w1, args.m, args.sigma,
                                args.kernel, args.R)
        setup.model()
        SmoothingKernelSpec(args.kernel, 1.0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.estimator != "binning" and min(params) <= 0:
        raise UsageError("--gamma values must be positive")

    rows = run_simulation(setup, args.estimator, params, args.reps, args.seed,
                          args.truth_n, args.workers)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_csv_row())
    finally:
        if args.out:
            out.close()
    return 0


def cmd_generate(args) -> int:
    write_csv(make_biased_classification(args.n, args.d, args.corr, args.seed), args.out)
    return 0


def _load_data(path: Path):
    if not path.is_file():
        raise UsageError(f"data file not found: {path}")
    try:
        return load_csv(path)
    except CsvParseError as exc:
        raise UsageError(str(exc)) from exc


def _report_dict(report, config: TrainConfig) -> dict:
    d = report.to_dict()
    d["config"] = config.to_dict()
    d["seed"] = config.seed
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    data = _load_data(args.data)
    if data.Y is None:
        raise UsageError("training data needs a 'y' column")
    try:
        config = TrainConfig(
            lam=args.lam, lr=args.lr, weight_decay=args.weight_decay, epochs=args.epochs,
            batch_size=args.batch, gamma=args.gamma, sigma=args.sigma, kernel=args.kernel,
            task=args.task, fairness=args.fairness, regularizer=args.regularizer,
            hidden=args.hidden, rep_dim=args.rep_dim, seed=args.seed,
        )
        eval_spec = SmoothingKernelSpec("rbf", args.eval_gamma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    train, test = split(data, SPLIT, args.seed)
    train, scaling = minmax_scale(train)
    test = apply_scaling(test, scaling)
    if args.select_gamma:
        gamma, scores = select_bandwidth(train, config, eval_spec=eval_spec)
        logger.info("bandwidth selection: %s -> gamma=%g", scores, gamma)
        config = TrainConfig.from_dict({**config.to_dict(), "gamma": gamma})

    try:
        net, history = train_frem(train, config)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = evaluate(net, test, config, eval_spec)

    model = net.to_dict()
    model.update({
        "scaling": scaling.to_dict(),
        "config": config.to_dict(),
        "seed": config.seed,
        "split": {"fractions": list(SPLIT), "seed": args.seed},
        "eval_gamma": args.eval_gamma,
        "history": {"supervised": history.supervised, "fairness": history.fairness,
                    "total": history.total},
    })
    _write_json(args.out_model, model)
    _write_json(args.out_report, _report_dict(report, config))
    return 0


def cmd_audit(args) -> int:
    if not args.model.is_file():
        raise UsageError(f"model file not found: {args.model}")
    model = json.loads(args.model.read_text(encoding="utf-8"))
    data = _load_data(args.data)
    net = Network.from_dict(model)
    config = TrainConfig.from_dict(model["config"])
    scaling = ScalingParams.from_dict(model["scaling"])
    fractions = tuple(model["split"]["fractions"])
    _, test = split(data, fractions, model["split"]["seed"])
    test = apply_scaling(test, scaling)
    if test.d != net.dims[0]:
        raise UsageError(f"model expects {net.dims[0]} features, data has {test.d}")
    report = evaluate(net, test, config, SmoothingKernelSpec("rbf", model["eval_gamma"]))
    _write_json(args.out_report, _report_dict(report, config))
    return 0


def cmd_gradcheck(args) -> int:
    errors = _gradcheck.run_gradcheck(args.seed, args.n_seeds)
    failed = []
    for name, err in errors.items():
        ok = err < _gradcheck.TOLERANCE
        print(f"{name}: max relative error {err:.3e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "generate": cmd_generate,
    "train": cmd_train,
    "audit": cmd_audit,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
