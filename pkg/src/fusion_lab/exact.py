"""Exact bitwise-MAP fusion by enumeration.

``exact_bitwise_map`` sweeps all ``2**m`` state sequences and sums each
node's honesty out in closed form, so its cost is ``O(2**m * m * n)``.
``exact_joint_enumeration`` is deliberately naive: it scores every joint
assignment of states and node statuses from the per-report kernel. It exists
to check the fast oracle and the message-passing engine on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from .model import (
    BYZANTINE,
    ModelParams,
    check_reports,
    decide,
    report_likelihood,
    tie_coins,
    transition_prob,
)

MAX_WINDOW = 20
MAX_JOINT_VARIABLES = 22


class WindowTooLargeError(ValueError):
    """The instance exceeds the enumeration guard."""


@dataclass
class ExactResult:
    decisions: np.ndarray
    state_posteriors: np.ndarray  # p(s_i = 0 | R)
    node_posteriors: np.ndarray  # p(h_j = Byzantine | R)
    log_evidence: np.ndarray | float
    state_logodds: np.ndarray


def all_sequences(m: int) -> np.ndarray:
    """All ``2**m`` binary sequences as a ``(2**m, m)`` uint8 array."""
    idx = np.arange(2**m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def _log_markov_prior(S: np.ndarray, rho: float) -> np.ndarray:
    changes = (S[:, 1:] != S[:, :-1]).sum(axis=1)
    stays = S.shape[1] - 1 - changes
    return math.log(0.5) + stays * math.log(rho) + changes * math.log1p(-rho)


def _log_mix(log_a: float, xa, log_b: float, xb):
    # log(a*e^xa + b*e^xb) with either weight allowed to be zero
    with np.errstate(divide="ignore"):
        return np.logaddexp(log_a + xa, log_b + xb)


def _finish(R, params, sums0, sums1, node_num, shift, coins):
    # Reports with zero probability under the model have no posterior: they
    # get NaN posteriors, log_evidence -inf and tie-rule decisions.
    total = sums0[..., :1] + sums1[..., :1]
    impossible = (total[..., 0] == 0) | ~np.isfinite(shift)
    with np.errstate(divide="ignore", invalid="ignore"):
        logodds = np.log(sums0) - np.log(sums1)
        evidence = np.log(total[..., 0]) + shift
        node_post = np.clip(node_num / total, 0.0, 1.0)
    logodds = np.where(impossible[..., None], np.nan, logodds)
    node_post = np.where(impossible[..., None], np.nan, node_post)
    evidence = np.where(impossible, -np.inf, evidence)
    batch = R.shape[:-2]
    if not batch:
        evidence = float(evidence)
    return ExactResult(
        decisions=decide(np.nan_to_num(logodds, nan=0.0), coins),
        state_posteriors=expit(logodds),
        node_posteriors=node_post,
        log_evidence=evidence,
        state_logodds=logodds,
    )


def exact_bitwise_map(
    R,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    coins=None,
    max_window: int = MAX_WINDOW,
    block: int = 1 << 18,
) -> ExactResult:
    """Exact per-slot posteriors via the ``2**m`` sequence sweep.

    Works on batches ``R.shape == (..., m, n)``. The sweep is split into
    blocks of at most ``block`` (problem, sequence, node) cells and combined
    with a running log-sum-exp, so memory stays bounded at ``m = 20``.
    """
    R = check_reports(R, params)
    m, n = params.m, params.n
    if m > max_window:
        raise WindowTooLargeError(
            f"window too large for exact oracle: m={m} exceeds cap {max_window}"
        )
    batch = R.shape[:-2]
    Rb = R.reshape((-1, m, n)).astype(np.float64)
    B = Rb.shape[0]

    eps, eta = params.epsilon, params.eta(use_fc_pmal=True)
    log_alpha = math.log(params.alpha) if params.alpha > 0 else -math.inf
    log_1m_alpha = math.log1p(-params.alpha)

    S_all = all_sequences(m)
    K = S_all.shape[0]
    k_block = max(1, min(K, block // n))
    b_block = max(1, block // (k_block * n))

    sums0 = np.zeros((B, m))
    sums1 = np.zeros((B, m))
    node_num = np.zeros((B, n))
    shift = np.full(B, -np.inf)

    for b0 in range(0, B, b_block):
        Rc = Rb[b0 : b0 + b_block]
        for k0 in range(0, K, k_block):
            S = S_all[k0 : k0 + k_block]
            Sf = S.astype(np.float64)
            # matches[b, k, j] = number of slots where node j agrees with sequence k
            matches = np.einsum("km,bmj->bkj", Sf, Rc) + np.einsum(
                "km,bmj->bkj", 1.0 - Sf, 1.0 - Rc
            )
            misses = m - matches
            log_hon = xlogy(matches, 1.0 - eps) + xlogy(misses, eps)
            log_byz = xlogy(matches, 1.0 - eta) + xlogy(misses, eta)
            node_terms = _log_mix(log_alpha, log_byz, log_1m_alpha, log_hon)
            logw = _log_markov_prior(S, params.rho)[None, :] + node_terms.sum(axis=-1)

            new_shift = np.maximum(shift[b0 : b0 + b_block], logw.max(axis=1))
            with np.errstate(invalid="ignore"):
                scale_old = np.exp(shift[b0 : b0 + b_block] - new_shift)
            scale_old = np.nan_to_num(scale_old, nan=0.0)
            # all-impossible problems keep zero weight instead of exp(-inf + inf)
            ref = np.where(np.isfinite(new_shift), new_shift, 0.0)
            w = np.exp(logw - ref[:, None])
            with np.errstate(divide="ignore", invalid="ignore"):
                byz_share = np.exp(log_alpha + log_byz - node_terms)
            byz_share = np.nan_to_num(byz_share, nan=0.0)
            sl = slice(b0, b0 + b_block)
            sums0[sl] = sums0[sl] * scale_old[:, None] + w @ (1.0 - Sf)
            sums1[sl] = sums1[sl] * scale_old[:, None] + w @ Sf
            node_num[sl] = node_num[sl] * scale_old[:, None] + np.einsum(
                "bk,bkj->bj", w, byz_share
            )
            shift[sl] = new_shift

    if coins is None:
        coins = tie_coins(rng, batch + (m,))
    return _finish(
        R,
        params,
        sums0.reshape(batch + (m,)),
        sums1.reshape(batch + (m,)),
        node_num.reshape(batch + (n,)),
        shift.reshape(batch),
        coins,
    )


def exact_joint_enumeration(
    R, params: ModelParams, rng: np.random.Generator | None = None, coins=None
) -> ExactResult:
    """Brute-force marginals over all ``2**(m+n)`` joint assignments.

    Single instance only. Every joint assignment is scored as the product of
    the per-report kernel over all ``(i, j)``, the Markov prior and the
    honesty prior.
    """
    R = check_reports(R, params)
    if R.ndim != 2:
        raise ValueError("exact_joint_enumeration takes a single (m, n) matrix")
    m, n = params.m, params.n
    if m + n > MAX_JOINT_VARIABLES:
        raise WindowTooLargeError(
            f"instance too large for joint enumeration: m+n={m + n} "
            f"exceeds {MAX_JOINT_VARIABLES}"
        )
    S = all_sequences(m)  # (Ks, m)
    H = all_sequences(n)  # (Kh, n); entries are h_j with honest=1

    # table[a, b, r] = log p(r | s=a, h=b)
    a, b, r = np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")
    with np.errstate(divide="ignore"):
        table = np.log(report_likelihood(r, a, b, params, use_fc_pmal=True))

    loglik = np.zeros((S.shape[0], H.shape[0]))
    for sa in (0, 1):
        Sa = (S == sa).astype(np.float64)
        for hb in (0, 1):
            Hb = (H == hb).astype(np.float64)
            T = table[sa, hb][R]  # (m, n): log p(r_ij | s_i=sa, h_j=hb)
            # sum_{i,j} [s_i=sa][h_j=hb] T_ij; masked so -inf never meets 0
            contrib = np.where(np.isneginf(T), -1e300, T)
            part = Sa @ contrib @ Hb.T
            loglik += part

    with np.errstate(divide="ignore"):
        log_s = np.log(transition_prob(S[:, 1:], S[:, :-1], params.rho)).sum(axis=1)
        log_s = log_s + math.log(0.5)
        p_h = np.where(H == BYZANTINE, params.alpha, 1.0 - params.alpha)
        log_h = np.log(p_h).sum(axis=1)
    logj = loglik + log_s[:, None] + log_h[None, :]
    logj = np.where(logj < -1e299, -np.inf, logj)
    shift = logj.max()
    w = np.exp(logj - (shift if np.isfinite(shift) else 0.0))
    w_s = w.sum(axis=1)  # (Ks,)
    sums0 = w_s @ (S == 0)
    sums1 = w_s @ (S == 1)
    node_num = w.sum(axis=0) @ (H == BYZANTINE)
    if coins is None:
        coins = tie_coins(rng, (m,))
    return _finish(R, params, sums0, sums1, node_num, shift, coins)
