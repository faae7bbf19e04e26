"""Reference fusion rules: majority vote and two isolation schemes.

The isolation rules are single-pass representative variants: a majority
vote gives reference decisions, each node is scored by how often it
disagrees with them, and a second vote either drops (hard) or down-weights
(soft) the suspicious nodes.

Tie coins come from ``rng`` or from an explicit ``coins`` array of shape
``(..., 2, m)``; row 0 breaks ties in the final vote and row 1 in the
reference vote, so ``hard_isolation_fuse`` with ``delta_iso=1`` reproduces
``majority_fuse`` draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, TIE_TOL, check_reports, decide, tie_coins

DEFAULT_DELTA_ISO = 0.325
AGREEMENT_CLAMP = 1e-3


@dataclass
class IsolationReport:
    mismatch_counts: np.ndarray
    isolated: np.ndarray
    weights: np.ndarray


def _coins(R, rng, coins):
    if coins is not None:
        coins = np.asarray(coins)
        if coins.ndim == R.ndim - 1:  # (..., m): one stage supplied
            coins = np.stack([coins, coins], axis=-2)
        return coins
    return tie_coins(rng, R.shape[:-2] + (2, R.shape[-2]))


def _row(coins, k):
    return None if coins is None else coins[..., k, :]


def _vote(R, weights, coins):
    # score > 0 favours state 1
    score = ((2.0 * R - 1.0) * weights[..., None, :]).sum(axis=-1)
    score = np.where(np.abs(score) <= TIE_TOL, 0.0, score)
    return decide(-score, coins)


def _majority(R, coin_row):
    ones = R.sum(axis=-1, dtype=np.int64)
    return decide(R.shape[-1] - 2 * ones, coin_row)


def majority_fuse(R, rng: np.random.Generator | None = None, coins=None) -> np.ndarray:
    """Per-slot majority of the reports; exact ties go to a fair coin."""
    R = check_reports(R)
    return _majority(R, _row(_coins(R, rng, coins), 0))


def _mismatches(R, ref):
    return (R != ref[..., :, None]).sum(axis=-2)


def hard_isolation_fuse(
    R,
    params: ModelParams | None = None,
    delta_iso: float = DEFAULT_DELTA_ISO,
    rng: np.random.Generator | None = None,
    coins=None,
):
    """Majority vote after discarding nodes that disagree too often.

    A node is isolated when its mismatch rate against the reference
    decisions exceeds ``delta_iso``. If every node is isolated the reference
    decisions are returned.
    """
    if not 0.0 < delta_iso <= 1.0:
        raise ValueError(f"delta_iso must lie in (0, 1], got {delta_iso!r}")
    R = check_reports(R, params)
    coins = _coins(R, rng, coins)
    m = R.shape[-2]
    ref = _majority(R, _row(coins, 1))
    mism = _mismatches(R, ref)
    isolated = mism / m > delta_iso
    keep = ~isolated
    kept = keep.sum(axis=-1)
    ones = (R * keep[..., None, :]).sum(axis=-1, dtype=np.int64)
    final = decide(kept[..., None] - 2 * ones, _row(coins, 0))
    final = np.where((kept == 0)[..., None], ref, final).astype(np.uint8)
    return final, IsolationReport(mism, isolated, keep.astype(np.float64))


def soft_isolation_fuse(
    R,
    params: ModelParams | None = None,
    rng: np.random.Generator | None = None,
    coins=None,
):
    """Weighted vote with log-odds weights from each node's agreement rate.

    ``w_j = max(0, log(a_j / (1 - a_j)))`` where ``a_j`` is the fraction of
    slots on which node ``j`` agrees with the reference decisions, clamped to
    ``[1e-3, 1 - 1e-3]``. Nodes agreeing half the time or less get no say.
    """
    R = check_reports(R, params)
    coins = _coins(R, rng, coins)
    m = R.shape[-2]
    ref = _majority(R, _row(coins, 1))
    mism = _mismatches(R, ref)
    agree = np.clip(1.0 - mism / m, AGREEMENT_CLAMP, 1.0 - AGREEMENT_CLAMP)
    weights = np.maximum(np.log(agree) - np.log1p(-agree), 0.0)
    final = _vote(R, weights, _row(coins, 0))
    return final, IsolationReport(mism, weights == 0.0, weights)
