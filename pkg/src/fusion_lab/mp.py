"""Loopy sum-product fusion on the state-chain / node-honesty factor graph.

Every binary message is kept normalized and stored as the log-odds of the
value 0 of its variable: ``log p(s=0)/p(s=1)`` for state messages and
``log p(h=Byzantine)/p(h=honest)`` for honesty messages. Products of many
normalized messages then become sums, and clamping the log-odds to
``+-CLAMP_LOGIT`` keeps every message probability inside
``[CLAMP_LO, 1 - CLAMP_LO]``.

All functions accept report matrices with arbitrary leading batch
dimensions, ``R.shape == (..., m, n)``, and treat each batch element as an
independent fusion problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from .model import ModelParams, check_reports, decide, tie_coins

CLAMP_LO = 1e-12
CLAMP_LOGIT = math.log((1.0 - CLAMP_LO) / CLAMP_LO)

DEFAULT_MAX_ITERS = 5
DEFAULT_TOL = 1e-6


class NumericalError(ArithmeticError):
    """A message became non-finite during an update."""


def _clamp(x):
    return np.clip(x, -CLAMP_LOGIT, CLAMP_LOGIT)


def _prior_logit(alpha: float) -> float:
    # alpha == 0 gives -inf on purpose: a pinned prior must dominate any
    # amount of evidence accumulated from the reports.
    if alpha == 0.0:
        return -math.inf
    return math.log(alpha) - math.log1p(-alpha)


@dataclass
class MessageState:
    """All normalized messages of the factor graph, as log-odds of value 0.

    Shapes (without batch dimensions): ``tau_l, tau_r, phi_r`` are ``(m,)``,
    ``phi_l`` is ``(m-1,)``, the ``nu_*`` and ``lambda_*`` families are
    ``(m, n)`` and the ``omega_*`` families ``(n,)``.
    """

    tau_l: np.ndarray
    tau_r: np.ndarray
    phi_l: np.ndarray
    phi_r: np.ndarray
    nu_u: np.ndarray
    nu_d: np.ndarray
    lambda_u: np.ndarray
    lambda_d: np.ndarray
    omega_u: np.ndarray
    omega_d: np.ndarray

    def prob(self, name: str) -> np.ndarray:
        """Probability of value 0 carried by message family ``name``."""
        return expit(getattr(self, name))

    def names(self):
        return [f.name for f in fields(self)]

    def copy(self) -> "MessageState":
        return MessageState(**{k: getattr(self, k).copy() for k in self.names()})

    def probs(self) -> dict:
        return {k: self.prob(k) for k in self.names()}


def _max_change(new: dict, old: dict, batch) -> np.ndarray:
    """Max-norm of the change in message probabilities, per batch element."""
    worst = np.zeros(batch)
    for k, p in new.items():
        if p.size == 0:
            continue
        d = np.abs(p - old[k]).reshape(batch + (-1,))
        worst = np.maximum(worst, d.max(axis=-1))
    return worst


@dataclass
class FusionResult:
    """Outcome of message-passing fusion.

    ``state_posteriors`` approximates ``p(s_i = 0 | R)`` and
    ``honesty_posteriors`` approximates ``p(h_j = Byzantine | R)``.
    """

    decisions: np.ndarray
    state_posteriors: np.ndarray
    honesty_posteriors: np.ndarray
    iterations_used: np.ndarray | int
    converged: np.ndarray | bool
    state_logodds: np.ndarray
    honesty_logodds: np.ndarray


class _Kernel:
    """Report likelihoods at the fusion center, split by agreement."""

    def __init__(self, params: ModelParams):
        eps = params.epsilon
        eta = params.eta(use_fc_pmal=True)
        self.hon_right, self.hon_wrong = 1.0 - eps, eps
        self.byz_right, self.byz_wrong = 1.0 - eta, eta
        self.rho = params.rho
        self.prior = _prior_logit(params.alpha)


def init_messages(R, params: ModelParams) -> MessageState:
    """Initial messages: honesty priors on every report factor, uniform elsewhere."""
    R = check_reports(R, params)
    batch = R.shape[:-2]
    m, n = params.m, params.n
    omega_u = np.full(batch + (n,), _clamp(_prior_logit(params.alpha)))
    zeros = np.zeros
    return MessageState(
        tau_l=zeros(batch + (m,)),
        tau_r=zeros(batch + (m,)),
        phi_l=zeros(batch + (m - 1,)),
        phi_r=zeros(batch + (m,)),  # first entry is p(s_1 = 0) = 0.5
        nu_u=zeros(batch + (m, n)),
        nu_d=zeros(batch + (m, n)),
        lambda_u=np.broadcast_to(omega_u[..., None, :], batch + (m, n)).copy(),
        lambda_d=zeros(batch + (m, n)),
        omega_u=omega_u,
        omega_d=zeros(batch + (n,)),
    )


def _chain_step(t, rho):
    # phi(0) = rho*tau(0) + (1-rho)*tau(1), written in log-odds form so that
    # t -> -t maps exactly to the negated output.
    return 2.0 * np.arctanh((2.0 * rho - 1.0) * np.tanh(0.5 * t))


def _pad_last(phi_l):
    # the last slot has no leftward chain message; log-odds 0 is uninformative
    pad = np.zeros(phi_l.shape[:-1] + (1,))
    return np.concatenate([phi_l, pad], axis=-1)


def _iterate(st: MessageState, R: np.ndarray, k: _Kernel) -> MessageState:
    m = R.shape[-2]
    r0 = R == 0
    new = st.copy()

    # report factors -> states
    lam = expit(st.lambda_u)
    not_lam = expit(-st.lambda_u)
    agree = k.byz_right * lam + k.hon_right * not_lam
    disagree = k.byz_wrong * lam + k.hon_wrong * not_lam
    x = np.log(agree / disagree)
    new.nu_u = _clamp(np.where(r0, x, -x))
    su = new.nu_u.sum(axis=-1)

    # rightward sweep along the state chain
    for i in range(m):
        if i > 0:
            new.phi_r[..., i] = _clamp(_chain_step(new.tau_r[..., i - 1], k.rho))
        new.tau_r[..., i] = _clamp(new.phi_r[..., i] + su[..., i])

    # leftward sweep
    new.tau_l[..., m - 1] = _clamp(su[..., m - 1])
    for i in range(m - 2, -1, -1):
        new.phi_l[..., i] = _clamp(_chain_step(new.tau_l[..., i + 1], k.rho))
        new.tau_l[..., i] = _clamp(new.phi_l[..., i] + su[..., i])

    # states -> report factors
    phi_l = _pad_last(new.phi_l)
    around = new.phi_r + phi_l + su
    new.nu_d = _clamp(around[..., None] - new.nu_u)

    # report factors -> honesty
    p0 = expit(new.nu_d)
    p1 = expit(-new.nu_d)
    q = np.where(r0, p0, p1)  # probability that the report is right
    not_q = np.where(r0, p1, p0)
    byz = k.byz_right * q + k.byz_wrong * not_q
    hon = k.hon_right * q + k.hon_wrong * not_q
    new.lambda_d = _clamp(np.log(byz / hon))

    # honesty -> report factors, and towards the prior
    total = new.lambda_d.sum(axis=-2)
    new.lambda_u = _clamp(k.prior + total[..., None, :] - new.lambda_d)
    new.omega_d = _clamp(total)

    for name in new.names():
        if np.isnan(getattr(new, name)).any():
            raise NumericalError(f"message family {name} became non-finite")
    return new


def iterate(state: MessageState, R, params: ModelParams) -> MessageState:
    """One full schedule round; returns a new state and leaves ``state`` intact.

    Order: state-bound report messages, a rightward chain sweep, a leftward
    chain sweep, then the report-to-honesty and honesty-to-report messages.
    """
    R = check_reports(R, params)
    with np.errstate(divide="ignore"):
        return _iterate(state, R, _Kernel(params))


def _marginals(st: MessageState, k: _Kernel):
    phi_l = _pad_last(st.phi_l)
    state_lo = st.phi_r + phi_l + st.nu_u.sum(axis=-1)
    honesty_lo = k.prior + st.lambda_d.sum(axis=-2)
    return state_lo, honesty_lo


def fuse_mp(
    R,
    params: ModelParams,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    rng: np.random.Generator | None = None,
    coins=None,
) -> FusionResult:
    """Approximate bitwise-MAP fusion by iterated message passing.

    Stops per problem once no message probability moves by ``tol`` or more,
    or after ``max_iters`` rounds. Ties at posterior 0.5 are broken with
    ``coins`` (shape ``(..., m)``) or with fresh coins from ``rng``; with
    neither, ties decide 0.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    R = check_reports(R, params)
    batch = R.shape[:-2]
    k = _Kernel(params)
    st = init_messages(R, params)
    iters = np.zeros(batch, dtype=np.int64)
    active = np.ones(batch, dtype=bool)
    probs = st.probs()
    with np.errstate(divide="ignore"):
        for _ in range(max_iters):
            new = _iterate(st, R, k)
            new_probs = new.probs()
            delta = _max_change(new_probs, probs, batch)
            iters += active
            if active.all():
                st, probs = new, new_probs
            else:
                for name in st.names():
                    old = getattr(st, name)
                    mask = active.reshape(batch + (1,) * (old.ndim - len(batch)))
                    setattr(st, name, np.where(mask, getattr(new, name), old))
                    probs[name] = np.where(mask, new_probs[name], probs[name])
            active &= ~(delta < tol)
            if not active.any():
                break
        state_lo, honesty_lo = _marginals(st, k)
    if coins is None:
        coins = tie_coins(rng, batch + (params.m,))
    converged = ~active
    if not batch:
        iters, converged = int(iters), bool(converged)
    return FusionResult(
        decisions=decide(state_lo, coins),
        state_posteriors=expit(state_lo),
        honesty_posteriors=expit(honesty_lo),
        iterations_used=iters,
        converged=converged,
        state_logodds=state_lo,
        honesty_logodds=honesty_lo,
    )
