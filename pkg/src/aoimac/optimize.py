"""Choosing protocol parameters: the SF turn cap and the ALOHA attempt probabilities."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .aloha_analytic import aloha_age, foc_residual
from .core import AlohaConfig, ChannelProfile, NumericalError, SfConfig, ValidationError
from .sf_analytic import sf_age

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
TAU_CLAMP = 1e-9


@dataclass(frozen=True)
class SweepResult:
    ages: tuple[float, ...]  # ages[k] is the network age at S = k + 1
    best_S: int
    monotone_decreasing: bool


@dataclass(frozen=True)
class TauSolution:
    taus: tuple[float, ...]
    method: str  # "exact2" | "approx" | "numeric"
    foc_max_residual: float
    achieved_age: float
    iterations: int = 0


def sf_sweep(profile: ChannelProfile, S_max: int) -> SweepResult:
    """Network SF age for S = 1..S_max; ties go to the smallest S."""
    if int(S_max) != S_max or S_max < 1:
        raise ValidationError(f"S_max must be a positive integer, got {S_max!r}", "bad_turn_cap")
    ages = tuple(sf_age(SfConfig(profile, S)).report.network for S in range(1, S_max + 1))
    best = min(range(len(ages)), key=lambda k: (ages[k], k))
    # strict, so that a flat sweep keeps best_S = 1
    monotone = len(ages) > 1 and all(b < a for a, b in zip(ages, ages[1:]))
    return SweepResult(ages, best + 1, monotone)


def _solution(profile: ChannelProfile, taus: np.ndarray, method: str, iterations: int = 0) -> TauSolution:
    cfg = AlohaConfig(profile, tuple(taus))
    return TauSolution(
        tuple(float(t) for t in taus),
        method,
        foc_residual(cfg).max_norm,
        aloha_age(cfg).network,
        iterations,
    )


def tau_exact_two(p1: float, p2: float) -> TauSolution:
    """Age-minimizing attempt probabilities for two nodes, in closed form."""
    profile = ChannelProfile((p1, p2))
    t1 = 1.0 / (1.0 + (p1 / p2) ** (1.0 / 3.0))
    t2 = 1.0 / (1.0 + (p2 / p1) ** (1.0 / 3.0))
    return _solution(profile, np.array([t1, t2]), "exact2")


def tau_approx(profile: ChannelProfile) -> TauSolution:
    """Large-M approximation: tau_i proportional to 1/sqrt(p_i), summing to one."""
    if profile.M < 2:
        raise ValidationError("the large-M approximation needs M >= 2; with one node tau = 1", "single_node")
    w = 1.0 / np.sqrt(profile.array())
    return _solution(profile, w / w.sum(), "approx")


def _foc_update(taus: np.ndarray, p: np.ndarray) -> np.ndarray:
    K = math.fsum((1.0 - taus) / (p * taus))
    Kp = K * p
    # positive root of K p t^2 + t - 1 = 0, written to avoid cancellation
    new = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * Kp))
    return np.clip(new, TAU_CLAMP, 1.0 - TAU_CLAMP)


def _max_residual(taus: np.ndarray, p: np.ndarray) -> float:
    rhs = math.fsum((1.0 - taus) / (p * taus))
    return float(np.max(np.abs((1.0 - taus) / (p * taus**2) - rhs)))


def tau_numeric(
    profile: ChannelProfile,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: str = "approx",
) -> TauSolution:
    """Stationary point of the network ALOHA age by damped fixed-point iteration.

    Each sweep freezes K = sum_j (1 - tau_j) / (p_j tau_j) and solves the
    per-node quadratic exactly. A step that increases the residual is halved.
    ``start`` is "approx" (the 1/sqrt(p) rule) or "uniform" (1/M each).

    Raises NumericalError carrying the last iterate when the residual is
    still above ``tol`` after ``max_iter`` sweeps.
    """
    if profile.M < 2:
        raise ValidationError("tau_numeric needs M >= 2; with one node tau = 1", "single_node")
    if not 0.0 < tol <= 1e-6:
        raise ValidationError(f"tol = {tol!r} outside (0, 1e-6]", "bad_tolerance")
    p = profile.array()
    if start == "approx":
        taus = np.asarray(tau_approx(profile).taus)
    elif start == "uniform":
        taus = np.full(profile.M, 1.0 / profile.M)
    else:
        raise ValidationError(f"unknown start {start!r}", "bad_start")
    taus = np.clip(taus, TAU_CLAMP, 1.0 - TAU_CLAMP)
    resid = _max_residual(taus, p)
    it = 0
    while resid > tol:
        if it >= max_iter:
            err = NumericalError(
                f"fixed point not reached after {max_iter} iterations (residual {resid:.3e})",
                "no_convergence",
            )
            err.last = _solution(profile, taus, "numeric", it)
            raise err
        it += 1
        proposal = _foc_update(taus, p)
        new_resid = _max_residual(proposal, p)
        if new_resid > resid:
            proposal = np.clip(taus + 0.5 * (proposal - taus), TAU_CLAMP, 1.0 - TAU_CLAMP)
            new_resid = _max_residual(proposal, p)
        taus, resid = proposal, new_resid
    return _solution(profile, taus, "numeric", it)


def tau_multistart(profile: ChannelProfile, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Run the solver from both starting points and log any disagreement.

    Returns the two solutions; the discrepancy is reported, not resolved.
    """
    a = tau_numeric(profile, tol, max_iter, start="approx")
    b = tau_numeric(profile, tol, max_iter, start="uniform")
    gap = float(np.max(np.abs(np.subtract(a.taus, b.taus))))
    if gap > 1e-6:
        log.warning("stationary points differ by %.3e between starts (ages %r vs %r)", gap, a.achieved_age, b.achieved_age)
    return a, b, gap
