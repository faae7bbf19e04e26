"""Generative model of a sensor network with Byzantine nodes.

Encoding conventions used throughout the package:

* states and reports are ``uint8`` arrays with values in {0, 1};
* node status follows the honest=1 / Byzantine=0 encoding (``HONEST``,
  ``BYZANTINE``);
* report matrices are indexed ``R[i, j]`` = report of node ``j`` about the
  state in slot ``i`` (shape ``(m, n)``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

HONEST = 1
BYZANTINE = 0

# Log-odds magnitude below which a posterior is treated as an exact tie.
# Sums of symmetric log-likelihood terms are not exactly zero in floating
# point, so an exact comparison would never detect the ties the model produces.
TIE_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the network model.

    ``rho`` is the persistence probability ``p(s_i == s_{i-1})``; ``rho=0.5``
    gives independent states. ``pmal_fc`` is the flipping probability assumed
    by the fusion center; ``None`` means it matches ``pmal_true``.
    """

    n: int
    m: int
    epsilon: float = 0.15
    alpha: float = 0.0
    rho: float = 0.5
    pmal_true: float = 1.0
    pmal_fc: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in [0, 0.5), got {self.epsilon!r}")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5], got {self.alpha!r}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho!r}")
        if not 0.0 <= self.pmal_true <= 1.0:
            raise ValueError(f"pmal_true must lie in [0, 1], got {self.pmal_true!r}")
        if self.pmal_fc is not None and not 0.0 <= self.pmal_fc <= 1.0:
            raise ValueError(f"pmal_fc must lie in [0, 1], got {self.pmal_fc!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @property
    def fc_pmal(self) -> float:
        return self.pmal_true if self.pmal_fc is None else self.pmal_fc

    def eta(self, use_fc_pmal: bool = True) -> float:
        """Wrong-report probability of a Byzantine node."""
        pmal = self.fc_pmal if use_fc_pmal else self.pmal_true
        return byzantine_flip_prob(self.epsilon, pmal)


def byzantine_flip_prob(epsilon: float, pmal: float) -> float:
    """Probability that a Byzantine report disagrees with the true state."""
    return epsilon * (1.0 - pmal) + (1.0 - epsilon) * pmal


def report_likelihood(r, s, h, params: ModelParams, use_fc_pmal: bool = True):
    """``p(r | s, h)`` for a single report; broadcasts over array arguments."""
    r, s, h = np.asarray(r), np.asarray(s), np.asarray(h)
    wrong = np.where(h == HONEST, params.epsilon, params.eta(use_fc_pmal))
    out = np.where(r == s, 1.0 - wrong, wrong)
    return float(out) if out.ndim == 0 else out


def transition_prob(s_prev, s_cur, rho: float):
    """``p(s_cur | s_prev)`` under the persistence convention."""
    out = np.where(np.asarray(s_prev) == np.asarray(s_cur), rho, 1.0 - rho)
    return float(out) if out.ndim == 0 else out


def sample_states(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw a Markov state sequence with a uniform first state."""
    u = rng.random(params.m)
    changes = u >= params.rho
    changes[0] = u[0] < 0.5
    return (np.cumsum(changes) % 2).astype(np.uint8)


def sample_node_statuses(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. node statuses, Byzantine with probability ``alpha``."""
    byz = rng.random(params.n) < params.alpha
    return np.where(byz, BYZANTINE, HONEST).astype(np.uint8)


def sample_reports(s, h, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw the ``(m, n)`` report matrix for states ``s`` and statuses ``h``.

    Every report is corrupted independently: honest nodes with probability
    ``epsilon``, Byzantine nodes with ``eta`` computed from ``pmal_true``.
    """
    s = np.asarray(s, dtype=np.uint8)
    h = np.asarray(h, dtype=np.uint8)
    if s.shape != (params.m,) or h.shape != (params.n,):
        raise ValueError(
            f"expected s of length {params.m} and h of length {params.n}, "
            f"got {s.shape} and {h.shape}"
        )
    wrong = np.where(h == HONEST, params.epsilon, params.eta(use_fc_pmal=False))
    flips = rng.random((params.m, params.n)) < wrong[None, :]
    return (s[:, None] ^ flips).astype(np.uint8)


def trial_stream(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent random stream for one Monte Carlo trial.

    Philox is counter based: the master seed is the key and the trial index
    occupies the top word of the 256-bit counter, so streams never overlap and
    can be built in any order or process.
    """
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    return np.random.Generator(
        np.random.Philox(key=master_seed, counter=[0, 0, 0, trial_index])
    )


def tie_coins(rng: np.random.Generator | None, shape) -> np.ndarray | None:
    """Fair 0/1 coins used to break exact posterior ties."""
    if rng is None:
        return None
    return (rng.random(shape) < 0.5).astype(np.uint8)


def decide(logodds0, coins=None) -> np.ndarray:
    """Bitwise decision from log-odds of state 0.

    Positive log-odds decide 0, negative decide 1. Ties take the coin when
    one is given and fall back to 0 otherwise.
    """
    logodds0 = np.asarray(logodds0)
    out = (logodds0 < 0).astype(np.uint8)
    tie = np.abs(logodds0) <= TIE_TOL
    if np.any(tie):
        out[tie] = 0 if coins is None else np.broadcast_to(coins, out.shape)[tie]
    return out


def check_reports(R, params: ModelParams | None = None) -> np.ndarray:
    """Validate a report matrix (or a batch of them) and return it as uint8."""
    R = np.asarray(R)
    if R.ndim < 2:
        raise ValueError(f"report matrix must be at least 2-D, got shape {R.shape}")
    if R.size and not np.isin(R, (0, 1)).all():
        raise ValueError("report matrix entries must be 0 or 1")
    if params is not None and R.shape[-2:] != (params.m, params.n):
        raise ValueError(
            f"report matrix has shape {R.shape[-2:]}, expected "
            f"(m, n) = ({params.m}, {params.n})"
        )
    return R.astype(np.uint8)


def read_report_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read the plain-text format: ``m`` lines of ``n`` space-separated bits."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = [int(tok) for tok in line.split()]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer token") from None
            if rows and len(row) != len(rows[0]):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty report matrix")
    return check_reports(np.array(rows))


def write_report_matrix(path: str | os.PathLike, R) -> None:
    R = check_reports(R)
    if R.ndim != 2:
        raise ValueError("can only write a single (m, n) report matrix")
    with open(path, "w") as fh:
        for row in R:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
