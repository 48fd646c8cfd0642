"""Command-line entry point.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures.
"""
import argparse
import json
import os
import sys

import numpy as np

from .config import DEFAULTS, load_config
from .errors import ConfigError, PriorLensError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_run_args(p):
    p.add_argument("--config", help="flat TOML config file")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-low", type=float)
    p.add_argument("--grid-high", type=float)
    p.add_argument("--grid-count", type=int)
    p.add_argument("--out", help="output directory for results.csv and summary.json")


def build_parser():
    parser = argparse.ArgumentParser(prog="priorlens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("normal", "ridge"):
        _add_run_args(sub.add_parser(name, help=f"replicated {name}-model experiment"))
    rates = sub.add_parser("rates", help="asymptotic-rate slope checks on the normal model")
    rates.add_argument("--n-values", default="25,50,100,200,400")
    rates.add_argument("--reps", type=int, default=2000)
    rates.add_argument("--seed", type=int, default=1)
    rates.add_argument("--out")
    crit = sub.add_parser("criteria", help="criteria for one dataset file")
    crit.add_argument("--data", required=True, help="text file; ridge rows are x_1 ... x_d y")
    crit.add_argument("--model", choices=("normal", "ridge"), default="normal")
    crit.add_argument("--hyper", required=True, help="comma-separated hyperparameters")
    crit.add_argument("--sigma", type=float, default=0.1)
    check = sub.add_parser("check", help="finite-difference derivative diagnostics")
    check.add_argument("--model", choices=("normal", "ridge"), default="normal")
    check.add_argument("--probes", type=int, default=5)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _run_config(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(f"config describes a {cfg.experiment} experiment, not {args.command}")
    else:
        cfg = DEFAULTS[args.command]()
    return cfg.with_overrides(
        n=args.n,
        replications=args.reps,
        seed=args.seed,
        grid_low=args.grid_low,
        grid_high=args.grid_high,
        grid_count=args.grid_count,
        output_path=args.out,
    )


def _cmd_experiment(args):
    from .harness import run_normal_experiment, run_ridge_experiment

    cfg = _run_config(args)
    run = run_normal_experiment if args.command == "normal" else run_ridge_experiment
    result = run(cfg)
    out = cfg.output_path or f"priorlens-{args.command}"
    result.write(out)
    summary = result.summary()
    for name in summary["means"]:
        print(f"h({name}): mean {summary['means'][name]:.4f}  std {summary['stds'][name]:.4f}")
    for line in summary["warnings"]:
        print(f"warning: {line}", file=sys.stderr)
    print(f"wrote {os.path.join(out, 'results.csv')} and summary.json")
    return EXIT_OK


def _cmd_rates(args):
    from .config import normal_defaults
    from .harness import run_rate_checks

    try:
        n_values = tuple(int(v) for v in args.n_values.split(","))
    except ValueError as exc:
        raise ConfigError(f"--n-values must be comma-separated integers: {args.n_values}") from exc
    cfg = normal_defaults(replications=args.reps, seed=args.seed, n_values=n_values)
    report = run_rate_checks(cfg)
    for name, (slope, err) in report.slopes.items():
        status = "ok" if report.within_band(name) else "outside band"
        print(f"{name}: slope {slope:.3f} +- {err:.3f} ({status})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "rates.json"), "w") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _load_dataset(path):
    try:
        arr = np.loadtxt(path, delimiter="," if path.endswith(".csv") else None, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}") from exc
    if arr.size == 0:
        raise ConfigError(f"data file {path} is empty")
    return arr


def _cmd_criteria(args):
    from .criteria import evaluate_criteria
    from .relation import prior_relation, relation_coefficients, self_average_coefficients
    from .estimate import assemble_tensors, find_map

    arr = _load_dataset(args.data)
    try:
        hv = [float(v) for v in args.hyper.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--hyper must be comma-separated numbers: {args.hyper}") from exc
    if args.model == "normal":
        from .conjugate.normal import NormalEvaluator, NormalHyper, NormalModel, NormalPrior

        if len(hv) != 3:
            raise ConfigError("normal model needs --hyper lambda,mu,epsilon")
        data = arr.ravel()
        model, prior, h = NormalModel(), NormalPrior(), NormalHyper(*hv)
        make = NormalEvaluator
    else:
        from .conjugate.ridge import RegressionData, RidgeEvaluator, RidgeHyper, RidgeModel, RidgePrior

        if len(hv) != 1 or arr.shape[1] < 2:
            raise ConfigError("ridge model needs --hyper lambda and rows x_1 ... x_d y")
        data = RegressionData(arr[:, :-1], arr[:, -1])
        model, prior, h = RidgeModel(args.sigma), RidgePrior(data.dim), RidgeHyper(*hv)
        make = lambda d, hh: RidgeEvaluator(d, hh, args.sigma)  # noqa: E731
    rep = evaluate_criteria(make(data, h), data, model, prior, h)
    base = evaluate_criteria(make(data, prior.base_hyper), data, model)
    w_hat = find_map(model, prior, data)
    t = assemble_tensors(model, prior, data, w_hat)
    n = len(data)
    out = {
        "n": n,
        "hyper": hv,
        "cv": rep.cv,
        "waic": rep.waic,
        "training_error": rep.training_error,
        "functional_variance": rep.functional_variance,
        "dic": rep.dic,
        "free_energy": rep.free_energy,
        "delta_cv": rep.cv - base.cv,
        "delta_waic": rep.waic - base.waic,
        "delta_dic": rep.dic - base.dic,
        "waicr": prior_relation(relation_coefficients(t), prior, h, w_hat) / n**2,
        "waicrs": prior_relation(self_average_coefficients(model, w_hat, data), prior, h, w_hat) / n**2,
        "w_hat": w_hat.tolist(),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_check(args):
    from .model import check_derivatives

    rng = np.random.default_rng(args.seed)
    probes = []
    if args.model == "normal":
        from .conjugate.normal import NormalHyper, NormalModel, NormalPrior

        model, prior = NormalModel(), NormalPrior()
        for _ in range(args.probes):
            w = np.array([rng.normal(), rng.uniform(0.3, 3.0)])
            h = NormalHyper(rng.uniform(0, 1), rng.uniform(-2, 2), rng.uniform(0, 1))
            probes.append((rng.normal(size=1), w, h))
    else:
        from .conjugate.ridge import RegressionData, RidgeHyper, RidgeModel, RidgePrior

        d = 5
        model, prior = RidgeModel(), RidgePrior(d)
        for _ in range(args.probes):
            sample = RegressionData(rng.normal(size=(1, d)), rng.normal(size=1))
            probes.append((sample, rng.normal(size=d), RidgeHyper(rng.uniform(0, 10))))
    report = check_derivatives(model, prior, probes, tolerance=args.tolerance)
    for name, err in sorted(report.errors.items()):
        print(f"{name}: {err:.3e}")
    if not report.passed:
        print(f"failed: {', '.join(report.failures)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {
    "normal": _cmd_experiment,
    "ridge": _cmd_experiment,
    "rates": _cmd_rates,
    "criteria": _cmd_criteria,
    "check": _cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PriorLensError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
