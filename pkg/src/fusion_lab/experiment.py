"""Monte Carlo estimation of bitwise error probabilities.

Trial ``t`` of an experiment draws its states, node statuses, reports and
tie coins from ``trial_stream(master_seed, t)``, so any subset of trials
can be recomputed in isolation and blocks of trials can run in any order or
process. Error counts are integers and are reduced by summation, which
makes every estimate independent of the worker count.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import baselines, exact, mp
from .model import (
    ModelParams,
    sample_node_statuses,
    sample_reports,
    sample_states,
    trial_stream,
)

SCHEMES = ("mp", "optimal", "majority", "hard", "soft")
BLOCK_TRIALS = 2000
MP_SUBBLOCK = 250  # keeps the (trials, m, n) message arrays cache-sized


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    scheme: str = "mp"
    trials: int = 100_000
    mp_max_iters: int = mp.DEFAULT_MAX_ITERS
    mp_tol: float = mp.DEFAULT_TOL
    delta_iso: float = baselines.DEFAULT_DELTA_ISO
    master_seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.mp_max_iters < 1:
            raise ValueError("mp_max_iters must be >= 1")
        if not self.mp_tol > 0:
            raise ValueError("mp_tol must be positive")
        if not 0.0 < self.delta_iso <= 1.0:
            raise ValueError("delta_iso must lie in (0, 1]")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.scheme == "optimal" and self.params.m > exact.MAX_WINDOW:
            raise exact.WindowTooLargeError(
                f"window too large for exact oracle: m={self.params.m} "
                f"exceeds cap {exact.MAX_WINDOW}"
            )

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with changes; model parameters may be passed directly."""
        pnames = {f.name for f in dataclasses.fields(ModelParams)}
        pchanges = {k: changes.pop(k) for k in list(changes) if k in pnames}
        params = dataclasses.replace(self.params, **pchanges)
        return dataclasses.replace(self, params=params, **changes)


@dataclass
class ErrorEstimate:
    config: ExperimentConfig
    errors: int
    decided_bits: int
    ci_low: float
    ci_high: float
    mean_mp_iterations: float | None = None

    @property
    def pe(self) -> float:
        return self.errors / self.decided_bits


@dataclass
class Comparison:
    """Several schemes run on identical generative draws."""

    config: ExperimentConfig
    schemes: tuple
    trial_errors: dict = field(repr=False)  # scheme -> per-trial error counts
    estimates: dict = field(default_factory=dict)  # scheme -> ErrorEstimate
    differing_trials: int = 0  # trials where the first two schemes disagree

    def pe(self, scheme: str) -> float:
        return self.estimates[scheme].pe

    def gap(self, a: str, b: str) -> tuple[float, float]:
        """``pe(a) - pe(b)`` and its paired standard error."""
        d = (self.trial_errors[a] - self.trial_errors[b]) / self.config.params.m
        se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else float("nan")
        return float(d.mean()), float(se)


def wilson_interval(errors: int, total: int) -> tuple[float, float]:
    ci = binomtest(int(errors), int(total)).proportion_ci(0.95, method="wilson")
    return float(ci.low), float(ci.high)


def draw_trials(params: ModelParams, master_seed: int, start: int, stop: int):
    """Sample trials ``start..stop-1``; returns ``(S, H, R, coins)`` stacks."""
    count = stop - start
    S = np.empty((count, params.m), np.uint8)
    H = np.empty((count, params.n), np.uint8)
    R = np.empty((count, params.m, params.n), np.uint8)
    coins = np.empty((count, 2, params.m), np.uint8)
    for k, t in enumerate(range(start, stop)):
        rng = trial_stream(master_seed, t)
        S[k] = sample_states(params, rng)
        H[k] = sample_node_statuses(params, rng)
        R[k] = sample_reports(S[k], H[k], params, rng)
        coins[k] = rng.random((2, params.m)) < 0.5
    return S, H, R, coins


def apply_scheme(config: ExperimentConfig, scheme: str, R, coins):
    """Fuse a batch of report matrices; returns ``(decisions, iterations)``."""
    p = config.params
    if scheme == "mp":
        decisions, iters = [], []
        for a in range(0, len(R), MP_SUBBLOCK):
            res = mp.fuse_mp(
                R[a : a + MP_SUBBLOCK], p, config.mp_max_iters, config.mp_tol,
                coins=coins[a : a + MP_SUBBLOCK, 0, :],
            )
            decisions.append(res.decisions)
            iters.append(res.iterations_used)
        return np.concatenate(decisions), np.concatenate(iters)
    if scheme == "optimal":
        return exact.exact_bitwise_map(R, p, coins=coins[..., 0, :]).decisions, None
    if scheme == "majority":
        return baselines.majority_fuse(R, coins=coins), None
    if scheme == "hard":
        return baselines.hard_isolation_fuse(R, p, config.delta_iso, coins=coins)[0], None
    if scheme == "soft":
        return baselines.soft_isolation_fuse(R, p, coins=coins)[0], None
    raise ValueError(f"unknown scheme {scheme!r}")


def _run_block(config: ExperimentConfig, schemes, start: int, stop: int):
    S, _, R, coins = draw_trials(config.params, config.master_seed, start, stop)
    errors, iters, decisions = {}, 0, {}
    for scheme in schemes:
        dec, it = apply_scheme(config, scheme, R, coins)
        errors[scheme] = (dec != S).sum(axis=-1)
        decisions[scheme] = dec
        if it is not None:
            iters = int(np.sum(it))
    differ = 0
    if len(schemes) > 1:
        a, b = decisions[schemes[0]], decisions[schemes[1]]
        differ = int((a != b).any(axis=-1).sum())
    return errors, iters, differ


def run_trial(config: ExperimentConfig, trial_index: int) -> int:
    """Number of wrongly decided slots in one trial."""
    errors, _, _ = _run_block(config, (config.scheme,), trial_index, trial_index + 1)
    return int(errors[config.scheme][0])


def default_workers() -> int:
    env = os.environ.get("FUSION_LAB_WORKERS")
    return max(1, int(env)) if env else 1


def _blocks(trials: int, block: int):
    return [(s, min(s + block, trials)) for s in range(0, trials, block)]


def _execute(config, schemes, workers, block=BLOCK_TRIALS):
    spans = _blocks(config.trials, block)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(spans) == 1:
        parts = [_run_block(config, schemes, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, config, schemes, a, b) for a, b in spans]
            parts = [f.result() for f in futures]
    errors = {s: np.concatenate([p[0][s] for p in parts]) for s in schemes}
    iters = sum(p[1] for p in parts)
    differ = sum(p[2] for p in parts)
    return errors, iters, differ


def _estimate(config, scheme, trial_errors, iters) -> ErrorEstimate:
    total = config.trials * config.params.m
    errs = int(trial_errors.sum())
    lo, hi = wilson_interval(errs, total)
    return ErrorEstimate(
        config=dataclasses.replace(config, scheme=scheme),
        errors=errs,
        decided_bits=total,
        ci_low=lo,
        ci_high=hi,
        mean_mp_iterations=iters / config.trials if scheme == "mp" else None,
    )


def estimate_error_probability(
    config: ExperimentConfig, workers: int | None = None
) -> ErrorEstimate:
    """Bitwise error rate of ``config.scheme`` with a 95% Wilson interval."""
    errors, iters, _ = _execute(config, (config.scheme,), workers)
    return _estimate(config, config.scheme, errors[config.scheme], iters)


def compare_schemes(
    config: ExperimentConfig,
    schemes=("mp", "optimal"),
    workers: int | None = None,
) -> Comparison:
    """Run ``schemes`` on the same draws (paired trials)."""
    schemes = tuple(schemes)
    for s in schemes:
        dataclasses.replace(config, scheme=s)  # validates each scheme
    errors, iters, differ = _execute(config, schemes, workers)
    out = Comparison(config, schemes, errors, differing_trials=differ)
    for s in schemes:
        out.estimates[s] = _estimate(config, s, errors[s], iters)
    return out


def sweep(configs, workers: int | None = None) -> list[ErrorEstimate]:
    """One estimate per configuration, in input order."""
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one configuration")
    return [estimate_error_probability(c, workers) for c in configs]
