"""Age of information under scheduled access with feedback (SF).

Nodes take round-robin turns. In its turn a node transmits fresh packets
until one is decoded or the turn cap ``S`` is used up. Between two updates
of node i, node i takes ``N`` turns (geometric in the per-turn success
probability ``r_i = 1 - (1 - p_i)^S``), every other node j takes ``N`` turns
of ``X_j`` slots each, and node i's last turn lasts ``Y`` slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AgeReport,
    ChannelProfile,
    InterUpdateMoments,
    NumericalError,
    SfConfig,
    ValidationError,
    age_from_moments,
    network_age,
)


@dataclass(frozen=True)
class TurnPmfs:
    """Turn-level distributions for one node.

    ``pmf_N[n-1]`` is P[N = n] for n up to the truncation point and
    ``tail_N`` is the probability mass beyond it.
    """

    pmf_N: np.ndarray
    tail_N: float
    pmf_X: np.ndarray
    pmf_Y: np.ndarray
    r: float


@dataclass(frozen=True)
class SfAgeBreakdown:
    moments: tuple[InterUpdateMoments, ...]
    eta: np.ndarray  # eta[j, i] = r_j / r_i
    report: AgeReport


@dataclass(frozen=True)
class OracleMoments:
    moments: InterUpdateMoments
    mean_error_bound: float
    second_error_bound: float
    truncated_at: int


def _check_p_S(p: float, S: int) -> None:
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"p = {p!r} outside (0, 1]", "p_nonpositive" if p <= 0 else "p_above_one")
    if int(S) != S or S < 1:
        raise ValidationError(f"turn cap must be a positive integer, got {S!r}", "bad_turn_cap")


def turn_success_prob(p, S: int):
    """``1 - (1 - p)^S`` computed without cancellation for small p."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.expm1(S * np.log1p(-p))
    return np.where(p >= 1.0, 1.0, out)


def _pmf_X(p: float, S: int) -> np.ndarray:
    a = np.arange(1, S + 1)
    pmf = (1.0 - p) ** (a - 1) * p
    pmf[-1] = (1.0 - p) ** (S - 1)
    return pmf


def _pmf_Y(p: float, S: int, r: float) -> np.ndarray:
    a = np.arange(1, S + 1)
    return (1.0 - p) ** (a - 1) * p / r


def turn_pmfs(p: float, S: int, tail_tol: float = 1e-14, max_turns: int = 10_000_000) -> TurnPmfs:
    """PMFs of turns-to-update N, another node's turn length X and the updating turn's length Y.

    N is truncated at the smallest n with ``(1 - r)^n < tail_tol``.
    """
    _check_p_S(p, S)
    r = float(turn_success_prob(p, S))
    q = 1.0 - r
    if q == 0.0:
        n_max = 1
    else:
        n_max = int(math.floor(math.log(tail_tol) / math.log(q))) + 1
        while q**n_max >= tail_tol:
            n_max += 1
        while n_max > 1 and q ** (n_max - 1) < tail_tol:
            n_max -= 1
    if n_max > max_turns:
        raise NumericalError(
            f"turns-to-update PMF needs {n_max} terms to reach tail mass {tail_tol}", "oracle_truncation"
        )
    n = np.arange(1, n_max + 1)
    pmf_N = q ** (n - 1) * r
    return TurnPmfs(pmf_N, q**n_max, _pmf_X(p, S), _pmf_Y(p, S, r), r)


def eta_matrix(cfg: SfConfig) -> np.ndarray:
    r = turn_success_prob(cfg.profile.array(), cfg.turn_cap)
    return r[:, None] / r[None, :]


def _check_node(cfg: SfConfig, node: int) -> None:
    if not 0 <= node < cfg.profile.M:
        raise ValidationError(f"node index {node} outside 0..{cfg.profile.M - 1}", "bad_node")


def sf_moments(cfg: SfConfig, node: int) -> InterUpdateMoments:
    """Closed-form E[Z_i] and E[Z_i^2] for node ``node`` (0-based)."""
    _check_node(cfg, node)
    p = cfg.profile.array()
    S = cfg.turn_cap
    r = turn_success_prob(p, S)
    i = node
    p_i, r_i = p[i], r[i]
    eta = r / r_i

    mean = math.fsum(eta / p)

    others = np.arange(len(p)) != i
    p_o, r_o, eta_o = p[others], r[others], eta[others]
    own_turns = (2.0 - p_i) / p_i**2
    other_square = 2.0 / p_o**2 * eta_o**2
    cap_correction = 2.0 * S / (r_i * p_o) * (eta_o - 1.0)
    mixed = ((2.0 - p_i) / (p_i * p_o) + 2.0 * (1.0 - r_o) / p_o**2) * eta_o
    # sum over ordered pairs j != j', both != i
    w = eta_o / p_o
    cross_pairs = (2.0 - r_i) * (w.sum() ** 2 - np.sum(w**2))
    second = own_turns + math.fsum(other_square) + math.fsum(cap_correction) + math.fsum(mixed) + cross_pairs
    return InterUpdateMoments(mean, second)


def sf_moments_oracle(cfg: SfConfig, node: int, tail_tol: float = 1e-14) -> OracleMoments:
    """Moments of Z_i composed numerically from the truncated turn PMFs.

    Uses only the PMFs and independence of N, X_j and Y, never the
    closed-form algebra of :func:`sf_moments`. The returned error bounds
    cover the probability mass dropped by truncating N.
    """
    _check_node(cfg, node)
    if not 0.0 < tail_tol <= 1e-6:
        raise ValidationError(f"tail_tol = {tail_tol!r} outside (0, 1e-6]", "bad_tolerance")
    p = cfg.profile.probs
    S = cfg.turn_cap
    i = node
    own = turn_pmfs(p[i], S, tail_tol)
    a = np.arange(1, S + 1, dtype=float)
    n = np.arange(1, len(own.pmf_N) + 1, dtype=float)

    EN = math.fsum(n * own.pmf_N)
    EN2 = math.fsum(n * n * own.pmf_N)
    EY = math.fsum(a * own.pmf_Y)
    W = (n[:, None] - 1.0) * S + a[None, :]
    EW = math.fsum((own.pmf_N[:, None] * own.pmf_Y[None, :] * W).ravel())
    EW2 = math.fsum((own.pmf_N[:, None] * own.pmf_Y[None, :] * W**2).ravel())

    EX, EX2 = [], []
    for j, p_j in enumerate(p):
        if j == i:
            continue
        pmf = _pmf_X(p_j, S)
        EX.append(math.fsum(a * pmf))
        EX2.append(math.fsum(a * a * pmf))
    EX = np.asarray(EX)
    EX2 = np.asarray(EX2)

    sum_EX = math.fsum(EX)
    mean = EW + EN * sum_EX
    second = EW2
    for k in range(len(EX)):
        second += EN * EX2[k] + (EN2 - EN) * EX[k] ** 2
        second += 2.0 * S * (EN2 - EN) * EX[k] + 2.0 * EY * EN * EX[k]
        second += EN2 * EX[k] * (sum_EX - EX[k])

    # mass of N beyond the truncation point, first and second moments
    q = 1.0 - own.r
    K = len(own.pmf_N)
    if q == 0.0:
        tail1 = tail2 = 0.0
    else:
        tail1 = q**K * (K + 1.0 / own.r)
        tail2 = q**K * (K**2 + (2 * K + 1) / own.r + 2 * q / own.r**2)
    # every Z term is at most (N S + N sum_EX) or its square in the tail
    c1 = S + sum_EX
    mean_bound = tail1 * c1
    second_bound = tail2 * c1**2 + tail1 * (
        math.fsum(EX2) + 2.0 * S * sum_EX + 2.0 * EY * sum_EX + sum_EX**2
    )
    return OracleMoments(InterUpdateMoments(mean, second), mean_bound, second_bound, K)


def sf_age(cfg: SfConfig) -> SfAgeBreakdown:
    moments = tuple(sf_moments(cfg, i) for i in range(cfg.profile.M))
    report = network_age([age_from_moments(m) for m in moments])
    return SfAgeBreakdown(moments, eta_matrix(cfg), report)


def sf_homogeneous_mean(p: float, M: int) -> float:
    """Mean inter-update time when every node has decode probability p; independent of S."""
    ChannelProfile((p,))
    if int(M) != M or M < 1:
        raise ValidationError(f"M must be a positive integer, got {M!r}", "bad_M")
    return M / p
