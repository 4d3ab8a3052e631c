"""Shared domain types and the age-from-moments formula.

Nodes are indexed from 0 inside the library. The CLI converts to and from
1-based indices at its boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: Age of a node that never updates (e.g. an ALOHA node with tau = 0).
UNBOUNDED = math.inf


class AoiError(Exception):
    """Base class for all library errors.

    ``code`` is a short machine-readable tag; the CLI maps error classes to
    exit codes.
    """

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ValidationError(AoiError, ValueError):
    code = "invalid"


class NumericalError(AoiError, ArithmeticError):
    code = "numerical"


def is_unbounded(age: float) -> bool:
    return math.isinf(age)


def _as_prob_tuple(values: Sequence[float], name: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a sequence of numbers", "not_numeric") from exc
    if any(math.isnan(v) for v in out):
        raise ValidationError(f"{name} contains NaN", "nan")
    return out


@dataclass(frozen=True)
class ChannelProfile:
    """Per-node probability that a lone transmission is decoded by the sink."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = _as_prob_tuple(self.probs, "probs")
        if len(probs) < 1:
            raise ValidationError("a channel profile needs at least one node", "empty_profile")
        for i, p in enumerate(probs):
            if p <= 0.0:
                raise ValidationError(
                    f"p[{i}] = {p!r}: decode probability must be > 0", "p_nonpositive"
                )
            if p > 1.0:
                raise ValidationError(
                    f"p[{i}] = {p!r}: decode probability must be <= 1", "p_above_one"
                )
        object.__setattr__(self, "probs", probs)

    @property
    def M(self) -> int:
        return len(self.probs)

    @property
    def p_min(self) -> float:
        return min(self.probs)

    @property
    def p_max(self) -> float:
        return max(self.probs)

    @property
    def rho(self) -> float:
        return self.p_max / self.p_min

    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class SfConfig:
    """Scheduled access with feedback: round-robin turns of at most ``turn_cap`` slots."""

    profile: ChannelProfile
    turn_cap: int

    def __post_init__(self):
        if isinstance(self.turn_cap, bool) or int(self.turn_cap) != self.turn_cap:
            raise ValidationError(f"turn cap must be an integer, got {self.turn_cap!r}", "bad_turn_cap")
        if self.turn_cap < 1:
            raise ValidationError(f"turn cap must be >= 1, got {self.turn_cap}", "bad_turn_cap")
        object.__setattr__(self, "turn_cap", int(self.turn_cap))


@dataclass(frozen=True)
class AlohaConfig:
    """Slotted ALOHA-like access: node i attempts in every slot with probability ``attempts[i]``."""

    profile: ChannelProfile
    attempts: tuple[float, ...]

    def __post_init__(self):
        taus = _as_prob_tuple(self.attempts, "attempts")
        if len(taus) != self.profile.M:
            raise ValidationError(
                f"{len(taus)} attempt probabilities for {self.profile.M} nodes", "length_mismatch"
            )
        for i, t in enumerate(taus):
            if not 0.0 <= t <= 1.0:
                raise ValidationError(f"tau[{i}] = {t!r} outside [0, 1]", "tau_out_of_range")
        object.__setattr__(self, "attempts", taus)

    def array(self) -> np.ndarray:
        return np.asarray(self.attempts, dtype=float)


@dataclass(frozen=True)
class InterUpdateMoments:
    """First and second moments of a node's inter-update time, in slots."""

    mean: float
    second_moment: float

    def __post_init__(self):
        # slack absorbs rounding in composed or sampled moments
        if not self.mean >= 1.0 - 1e-12:
            raise ValidationError(f"mean inter-update time must be >= 1 slot, got {self.mean!r}", "bad_mean")
        if not self.second_moment >= self.mean**2 * (1.0 - 1e-12):
            raise ValidationError(
                f"second moment {self.second_moment!r} below squared mean {self.mean**2!r}",
                "negative_variance",
            )

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2


@dataclass(frozen=True)
class AgeReport:
    per_node: tuple[float, ...]
    network: float


def age_from_moments(m: InterUpdateMoments) -> float:
    """Average age of a node whose updates reset the age to one slot.

    ``E[Z^2] / (2 E[Z]) + 1``.
    """
    if not m.mean > 0:
        raise ValidationError(f"mean inter-update time must be > 0, got {m.mean!r}", "bad_mean")
    return m.second_moment / (2.0 * m.mean) + 1.0


def network_age(per_node: Sequence[float]) -> AgeReport:
    ages = tuple(float(a) for a in per_node)
    if not ages:
        raise ValidationError("network age of an empty network", "empty_profile")
    if any(is_unbounded(a) for a in ages):
        return AgeReport(ages, UNBOUNDED)
    return AgeReport(ages, math.fsum(ages) / len(ages))
