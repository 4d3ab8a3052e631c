"""Symmetric updating: every node gets the same age.

SF is symmetric when turns are uncapped. ALOHA is symmetric when
``p_i tau_i / (1 - tau_i)`` equals a common beta for all nodes; the best
beta solves ``sum_j beta / (beta + p_j) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aloha_analytic import LOG_PRODUCT_THRESHOLD
from .core import ChannelProfile, NumericalError, ValidationError

LN_2E = math.log(2.0 * math.e)


@dataclass(frozen=True)
class SymmetricAloha:
    gamma_star: float
    taus: tuple[float, ...]
    age: float
    beta_star: float


@dataclass(frozen=True)
class SymmetricReport:
    age_sf: float
    age_aloha: float
    beta_star: float
    gamma_star: float
    taus: tuple[float, ...]
    L: float
    bounds: tuple[float, float]
    L_M: float
    R: float
    rho: float


def symmetric_sf_age(profile: ChannelProfile) -> tuple[float, float]:
    """Common SF age with uncapped turns, and the ratio R = sum 1/p^2 / sum 1/p.

    Returns ``(age, R)``.
    """
    p = profile.array()
    inv = math.fsum(1.0 / p)
    R = math.fsum(1.0 / p**2) / inv
    return 0.5 * (1.0 + inv + R), R


def _require_two(profile: ChannelProfile) -> None:
    if profile.M < 2:
        raise ValidationError(
            "symmetric ALOHA needs M >= 2; a single node should simply transmit every slot (tau = 1)",
            "single_node",
        )


def beta_star(profile: ChannelProfile, tol: float = 1e-15) -> float:
    """Root of ``sum_j beta / (beta + p_j) = 1`` by bisection.

    The root always lies in [p_min/(M-1), p_max/(M-1)] and the left-hand
    side is increasing in beta, so bisection on that bracket cannot fail.
    Stops once the relative bracket width drops below ``tol`` or the
    bracket can no longer be split in floating point.
    """
    _require_two(profile)
    if not 0.0 < tol <= 1e-8:
        raise ValidationError(f"tol = {tol!r} outside (0, 1e-8]", "bad_tolerance")
    p = profile.array()
    lo = profile.p_min / (profile.M - 1)
    hi = profile.p_max / (profile.M - 1)

    def f(b: float) -> float:
        return math.fsum(b / (b + p)) - 1.0

    if lo == hi:
        return lo
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or (hi - lo) / mid < tol:
            break
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    # endpoint with the smaller residual
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def common_success_prob(profile: ChannelProfile, beta: float) -> float:
    """Per-slot update probability of every node at ``tau_i = beta / (beta + p_i)``."""
    p = profile.array()
    if profile.M <= LOG_PRODUCT_THRESHOLD:
        return beta * float(np.prod(p / (beta + p)))
    return math.exp(math.log(beta) + math.fsum(np.log(p / (beta + p))))


def symmetric_aloha(profile: ChannelProfile) -> SymmetricAloha:
    b = beta_star(profile)
    p = profile.array()
    gamma = common_success_prob(profile, b)
    taus = tuple(float(t) for t in b / (b + p))
    return SymmetricAloha(gamma, taus, 0.5 + 1.0 / gamma, b)


def theorem_bounds(p_min: float, p_max: float, M: int) -> tuple[float, float, float]:
    """Band around ln(2e) that contains ln(age_aloha / age_sf).

    Returns ``(lower, upper, L_M)``.
    """
    if not 0.0 < p_min <= p_max <= 1.0:
        raise ValidationError(f"need 0 < p_min <= p_max <= 1, got ({p_min!r}, {p_max!r})", "bad_range")
    if int(M) != M or M < 2:
        raise ValidationError(f"M must be an integer >= 2, got {M!r}", "single_node")
    rho2 = (p_max / p_min) ** 2
    L_M = (1.0 + 2.0 * rho2) / (M - 1) + rho2 / (M - 1) ** 2
    return LN_2E - L_M, LN_2E + L_M, L_M


def symmetric_compare(profile: ChannelProfile) -> SymmetricReport:
    _require_two(profile)
    age_sf, R = symmetric_sf_age(profile)
    al = symmetric_aloha(profile)
    L = math.log(al.age / age_sf)
    lower, upper, L_M = theorem_bounds(profile.p_min, profile.p_max, profile.M)
    if not lower <= L <= upper:
        raise NumericalError(
            f"log age ratio {L!r} outside [{lower!r}, {upper!r}]; the computation is wrong",
            "bound_violation",
        )
    return SymmetricReport(
        age_sf=age_sf,
        age_aloha=al.age,
        beta_star=al.beta_star,
        gamma_star=al.gamma_star,
        taus=al.taus,
        L=L,
        bounds=(lower, upper),
        L_M=L_M,
        R=R,
        rho=profile.rho,
    )
