"""Command-line front end.

Subcommands::

    fuse      fuse one report matrix with any scheme
    oracle    exact posteriors for one report matrix
    simulate  Monte Carlo error probabilities over a parameter sweep (CSV)
    compare   paired message-passing vs exact-oracle comparison (CSV)

Exit status is 0 on success, 2 for configuration or input errors and 3 when
a numerical failure aborts the computation.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys

import numpy as np

from . import baselines, exact, mp
from .experiment import (
    SCHEMES,
    ExperimentConfig,
    compare_schemes,
    default_workers,
    estimate_error_probability,
)
from .model import ModelParams, read_report_matrix

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SIMULATE_COLUMNS = [
    "scheme", "n", "m", "epsilon", "rho", "alpha", "pmal", "pmal_fc",
    "trials", "pe", "ci_low", "ci_high", "mean_iters", "seed",
]
COMPARE_COLUMNS = [
    "n", "m", "epsilon", "rho", "alpha", "pmal", "pmal_fc", "trials",
    "pe_mp", "pe_opt", "pe_gap", "gap_se", "differ_fraction", "seed",
]
SWEEPABLE = {"n": int, "m": int, "epsilon": float, "rho": float, "alpha": float,
             "pmal": float, "pmal_fc": float}


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    """Shortest round-tripping text for a parameter value."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _fmt17(x: float) -> str:
    return f"{x:.17g}"


def parse_sweep(spec: str):
    """``name=start:step:stop`` with an inclusive stop."""
    try:
        name, rng = spec.split("=", 1)
        start, step, stop = (float(v) for v in rng.split(":"))
    except ValueError:
        raise ConfigError(f"bad sweep spec {spec!r}; expected name=start:step:stop") from None
    name = name.strip().replace("-", "_")
    if name not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {name!r}; choose from {sorted(SWEEPABLE)}")
    if not step > 0 or stop < start:
        raise ConfigError(f"bad sweep range in {spec!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [round(start + k * step, 12) for k in range(count)]
    if SWEEPABLE[name] is int:
        if any(v != int(v) for v in values):
            raise ConfigError(f"{name} sweep must produce integers")
        values = [int(v) for v in values]
    return name, values


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _add_model_flags(p, need_shape: bool):
    g = p.add_argument_group("model")
    g.add_argument("--n", type=int, default=None if not need_shape else 20,
                   help="number of nodes" + ("" if need_shape else " (checked against the file)"))
    g.add_argument("--m", type=int, default=None if not need_shape else 10,
                   help="observation window" + ("" if need_shape else " (checked against the file)"))
    g.add_argument("--epsilon", type=float, default=0.15)
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("--rho", type=float, default=0.5, help="state persistence probability")
    g.add_argument("--pmal", default="1.0",
                   help="Byzantine flipping probability; comma list allowed for simulate")
    g.add_argument("--pmal-fc", type=float, default=None,
                   help="flipping probability assumed by the fusion center (default: --pmal)")


def _add_engine_flags(p):
    g = p.add_argument_group("engines")
    g.add_argument("--iters", type=int, default=mp.DEFAULT_MAX_ITERS)
    g.add_argument("--tol", type=float, default=mp.DEFAULT_TOL)
    g.add_argument("--delta-iso", type=float, default=baselines.DEFAULT_DELTA_ISO)
    g.add_argument("--seed", type=int, default=0)


def _add_run_flags(p):
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--sweep", action="append", default=[],
                   help="name=start:step:stop (repeatable; grids multiply)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $FUSION_LAB_WORKERS or 1)")
    p.add_argument("-o", "--output", default="-", help="CSV path, '-' for stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusion-lab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fuse = sub.add_parser("fuse", help="fuse one report matrix")
    fuse.add_argument("input", help="report matrix file (m lines of n bits)")
    fuse.add_argument("--scheme", choices=SCHEMES, default="mp")
    fuse.add_argument("--json", action="store_true", help="emit one JSON object")
    fuse.add_argument("-o", "--output", default="-", help="output path, '-' for stdout")
    _add_model_flags(fuse, need_shape=False)
    _add_engine_flags(fuse)

    oracle = sub.add_parser("oracle", help="exact posteriors for one report matrix")
    oracle.add_argument("input")
    oracle.add_argument("--naive", action="store_true",
                        help="use full joint enumeration (m+n <= 22)")
    oracle.add_argument("--json", action="store_true")
    oracle.add_argument("-o", "--output", default="-", help="output path, '-' for stdout")
    _add_model_flags(oracle, need_shape=False)
    _add_engine_flags(oracle)

    sim = sub.add_parser("simulate", help="error probabilities over a sweep")
    sim.add_argument("--schemes", default="mp", help="comma list from " + ",".join(SCHEMES))
    _add_model_flags(sim, need_shape=True)
    _add_engine_flags(sim)
    _add_run_flags(sim)

    cmp_ = sub.add_parser("compare", help="paired mp vs optimal comparison")
    _add_model_flags(cmp_, need_shape=True)
    _add_engine_flags(cmp_)
    _add_run_flags(cmp_)
    return parser


def _params(args, n, m, pmal) -> ModelParams:
    try:
        return ModelParams(n=n, m=m, epsilon=args.epsilon, alpha=args.alpha,
                           rho=args.rho, pmal_true=pmal, pmal_fc=args.pmal_fc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _check_engine(args):
    if args.iters < 1:
        raise ConfigError("--iters must be >= 1")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    if not 0 < args.delta_iso <= 1:
        raise ConfigError("--delta-iso must lie in (0, 1]")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------- single fusion

def _load_for_single(args, optimal: bool):
    _check_engine(args)
    pmal = _float_list(args.pmal)
    if len(pmal) != 1:
        raise ConfigError("--pmal takes a single value here")
    if optimal and args.m is not None and args.m > exact.MAX_WINDOW:
        raise ConfigError("window too large for exact oracle "
                          f"(m={args.m} > {exact.MAX_WINDOW})")
    try:
        R = read_report_matrix(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report matrix: {exc}") from None
    m, n = R.shape
    if args.m is not None and args.m != m:
        raise ConfigError(f"--m {args.m} does not match the file ({m} rows)")
    if args.n is not None and args.n != n:
        raise ConfigError(f"--n {args.n} does not match the file ({n} columns)")
    if optimal and m > exact.MAX_WINDOW:
        raise ConfigError(f"window too large for exact oracle (m={m} > {exact.MAX_WINDOW})")
    return R, _params(args, n, m, pmal[0])


def _emit_single(out, args, decisions, state_post, honesty_post, iterations, converged):
    record = {
        "decisions": [int(v) for v in decisions],
        "state_posteriors": [float(v) for v in state_post],
        "honesty_posteriors": None if honesty_post is None else [float(v) for v in honesty_post],
        "iterations": iterations,
        "converged": converged,
    }
    if args.json:
        out.write(json.dumps(record) + "\n")
        return
    out.write("decisions: " + "".join(str(v) for v in record["decisions"]) + "\n")
    out.write("p(s=0|R): " + " ".join(_fmt17(v) for v in record["state_posteriors"]) + "\n")
    if honesty_post is not None:
        out.write("p(byzantine|R): " + " ".join(_fmt17(v) for v in honesty_post) + "\n")
    if iterations is not None:
        out.write(f"iterations: {iterations}\nconverged: {str(converged).lower()}\n")


def cmd_fuse(args, out) -> None:
    R, params = _load_for_single(args, optimal=args.scheme == "optimal")
    rng = np.random.default_rng(args.seed)
    iterations = converged = None
    honesty = None
    if args.scheme == "mp":
        res = mp.fuse_mp(R, params, args.iters, args.tol, rng=rng)
        dec, post, honesty = res.decisions, res.state_posteriors, res.honesty_posteriors
        iterations, converged = res.iterations_used, res.converged
    elif args.scheme == "optimal":
        res = exact.exact_bitwise_map(R, params, rng=rng)
        dec, post, honesty = res.decisions, res.state_posteriors, res.node_posteriors
    else:
        if args.scheme == "majority":
            dec = baselines.majority_fuse(R, rng=rng)
        elif args.scheme == "hard":
            dec, _ = baselines.hard_isolation_fuse(R, params, args.delta_iso, rng=rng)
        else:
            dec, _ = baselines.soft_isolation_fuse(R, params, rng=rng)
        # hard decisions only: report the decided bit as a degenerate posterior
        post = 1.0 - dec.astype(float)
    _emit_single(out, args, dec, post, honesty, iterations, converged)


def cmd_oracle(args, out) -> None:
    R, params = _load_for_single(args, optimal=True)
    rng = np.random.default_rng(args.seed)
    if args.naive:
        try:
            res = exact.exact_joint_enumeration(R, params, rng=rng)
        except exact.WindowTooLargeError as exc:
            raise ConfigError(str(exc)) from None
    else:
        res = exact.exact_bitwise_map(R, params, rng=rng)
    _emit_single(out, args, res.decisions, res.state_posteriors, res.node_posteriors, None, None)


# ---------------------------------------------------------------- Monte Carlo

def _grid(args):
    """Yield ``(ModelParams, sweep-dict)`` for every grid point."""
    _check_engine(args)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    base = {"n": args.n, "m": args.m, "epsilon": args.epsilon, "rho": args.rho,
            "alpha": args.alpha, "pmal": _float_list(args.pmal), "pmal_fc": args.pmal_fc}
    axes = {"pmal": base["pmal"]}
    for spec in args.sweep:
        name, values = parse_sweep(spec)
        axes[name] = values
    names = list(axes)
    points = []
    for combo in itertools.product(*(axes[k] for k in names)):
        v = dict(base, **dict(zip(names, combo)))
        try:
            p = ModelParams(n=v["n"], m=v["m"], epsilon=v["epsilon"], alpha=v["alpha"],
                            rho=v["rho"], pmal_true=v["pmal"], pmal_fc=v["pmal_fc"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        points.append(p)
    return points


def _config(args, params, scheme) -> ExperimentConfig:
    try:
        return ExperimentConfig(params=params, scheme=scheme, trials=args.trials,
                                mp_max_iters=args.iters, mp_tol=args.tol,
                                delta_iso=args.delta_iso, master_seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _workers(args) -> int:
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return args.workers
    try:
        return default_workers()
    except ValueError:
        raise ConfigError("FUSION_LAB_WORKERS must be an integer") from None


def _param_cells(p: ModelParams):
    return {"n": _fmt(p.n), "m": _fmt(p.m), "epsilon": _fmt(p.epsilon), "rho": _fmt(p.rho),
            "alpha": _fmt(p.alpha), "pmal": _fmt(p.pmal_true), "pmal_fc": _fmt(p.fc_pmal)}


def cmd_simulate(args, out) -> None:
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise ConfigError(f"unknown scheme(s) {bad}; choose from {','.join(SCHEMES)}")
    points = _grid(args)
    workers = _workers(args)
    configs = [_config(args, p, s) for s in schemes for p in points]
    writer = csv.DictWriter(out, fieldnames=SIMULATE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for cfg in configs:
        est = estimate_error_probability(cfg, workers=workers)
        row = {"scheme": cfg.scheme, **_param_cells(cfg.params), "trials": cfg.trials,
               "pe": _fmt17(est.pe), "ci_low": _fmt17(est.ci_low),
               "ci_high": _fmt17(est.ci_high),
               "mean_iters": "" if est.mean_mp_iterations is None
               else _fmt17(est.mean_mp_iterations),
               "seed": cfg.master_seed}
        writer.writerow(row)
        out.flush()


def cmd_compare(args, out) -> None:
    points = _grid(args)
    workers = _workers(args)
    for p in points:
        if p.m > exact.MAX_WINDOW:
            raise ConfigError(f"window too large for exact oracle (m={p.m} > {exact.MAX_WINDOW})")
    writer = csv.DictWriter(out, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        cfg = _config(args, p, "mp")
        res = compare_schemes(cfg, ("mp", "optimal"), workers=workers)
        gap, se = res.gap("mp", "optimal")
        writer.writerow({**_param_cells(p), "trials": cfg.trials,
                         "pe_mp": _fmt17(res.pe("mp")), "pe_opt": _fmt17(res.pe("optimal")),
                         "pe_gap": _fmt17(gap), "gap_se": _fmt17(se),
                         "differ_fraction": _fmt17(res.differing_trials / cfg.trials),
                         "seed": cfg.master_seed})
        out.flush()


COMMANDS = {"fuse": cmd_fuse, "oracle": cmd_oracle,
            "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_CONFIG if exc.code else 0
    output = getattr(args, "output", "-")
    buf = io.StringIO()
    try:
        COMMANDS[args.command](args, buf)
    except ConfigError as exc:
        print(f"fusion-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (mp.NumericalError, FloatingPointError) as exc:
        print(f"fusion-lab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(output, "w", newline="") as fh:
            fh.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
