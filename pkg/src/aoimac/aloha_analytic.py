"""Age of information under slotted ALOHA-like random access.

Node i updates in a slot when it alone transmits and its packet is decoded,
so inter-update times are geometric with per-slot success probability
``gamma_i = tau_i p_i prod_{j != i} (1 - tau_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import UNBOUNDED, AgeReport, AlohaConfig, ValidationError, network_age

# above this many nodes the collision-free product is formed in log space
LOG_PRODUCT_THRESHOLD = 64


@dataclass(frozen=True)
class AlohaRates:
    gammas: tuple[float, ...]


@dataclass(frozen=True)
class ApproxDiagnostics:
    C: float
    C_prime: float
    age_lower_bound: float


@dataclass(frozen=True)
class FocResidual:
    residuals: np.ndarray
    max_norm: float


def _silence_others(taus: np.ndarray) -> np.ndarray:
    """prod_{j != i} (1 - tau_j) for every i, exact when some tau_j = 1."""
    M = len(taus)
    if M <= LOG_PRODUCT_THRESHOLD:
        out = np.empty(M)
        for i in range(M):
            out[i] = np.prod(np.delete(1.0 - taus, i))
        return out
    silent = 1.0 - taus
    zeros = silent == 0.0
    if zeros.sum() >= 2:
        return np.zeros(M)
    logs = np.log(np.where(zeros, 1.0, silent))
    total = logs.sum()
    out = np.exp(total - logs)
    if zeros.any():
        out = np.where(zeros, out, 0.0)
    return out


def success_probs(p: np.ndarray, taus: np.ndarray) -> np.ndarray:
    return taus * p * _silence_others(taus)


def aloha_rates(cfg: AlohaConfig) -> AlohaRates:
    g = success_probs(cfg.profile.array(), cfg.array())
    return AlohaRates(tuple(float(x) for x in g))


def _age_from_gamma(gamma: float) -> float:
    # geometric Z: E[Z] = 1/g, E[Z^2] = 2/g^2 - 1/g
    return UNBOUNDED if gamma == 0.0 else 0.5 + 1.0 / gamma


def aloha_age(cfg: AlohaConfig) -> AgeReport:
    return network_age([_age_from_gamma(g) for g in aloha_rates(cfg).gammas])


def _interior_taus(cfg: AlohaConfig) -> np.ndarray:
    taus = cfg.array()
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise ValidationError("requires every attempt probability strictly inside (0, 1)", "tau_boundary")
    return taus


def foc_residual(cfg: AlohaConfig) -> FocResidual:
    """Stationarity residuals of the network age with respect to each tau_i.

    ``(1 - tau_i) / (p_i tau_i^2) - sum_j (1 - tau_j) / (p_j tau_j)``; all
    zero exactly at a stationary point.
    """
    taus = _interior_taus(cfg)
    p = cfg.profile.array()
    rhs = math.fsum((1.0 - taus) / (p * taus))
    res = (1.0 - taus) / (p * taus**2) - rhs
    return FocResidual(res, float(np.max(np.abs(res))))


def aloha_age_lower_bound(cfg: AlohaConfig) -> ApproxDiagnostics:
    """Lower bound on the network age from ``1 - x <= exp(-x)``."""
    taus = _interior_taus(cfg)
    p = cfg.profile.array()
    M = len(p)
    C = math.fsum((1.0 / p) * (1.0 / taus - 1.0))
    C_prime = math.fsum(1.0 / (p * taus))
    bound = 0.5 + math.exp(math.fsum(taus)) / M * C
    return ApproxDiagnostics(C, C_prime, bound)
