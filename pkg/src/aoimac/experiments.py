"""Canned experiments that regenerate the data behind the three figures.

Each experiment is described by an :class:`ExperimentSpec`, validated
before any work starts, and rendered to CSV text with ``#`` metadata lines.
Floats are written with 17 significant digits and rows are ordered by
index, so reruns with the same spec are byte-identical regardless of
thread count.
"""

from __future__ import annotations

import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .aloha_analytic import aloha_age
from .core import AlohaConfig, ChannelProfile, NumericalError, SfConfig, ValidationError
from .optimize import DEFAULT_MAX_ITER, DEFAULT_TOL, sf_sweep, tau_approx, tau_exact_two, tau_numeric
from .sf_analytic import sf_age
from .sim import thread_count
from .symmetric import symmetric_compare, theorem_bounds

log = logging.getLogger(__name__)

KINDS = ("s_sweep", "sf_vs_aloha_scatter", "approx_error_cdf")
ALIASES = {"s-sweep": "s_sweep", "scatter": "sf_vs_aloha_scatter", "approx-cdf": "approx_error_cdf"}
MIN_P = 1e-6

DEFAULTS: dict[str, dict[str, Any]] = {
    "s_sweep": {"profile": [0.1, 0.5, 0.9], "S_max": 30},
    "sf_vs_aloha_scatter": {"network_count": 500, "M": 1000, "p_low": 0.1, "p_high": 0.9, "seed": 1},
    "approx_error_cdf": {
        "M_list": [5, 20],
        "sample_count": 1000,
        "p_low": 0.0,
        "p_high": 1.0,
        "seed": 1,
        "tol": DEFAULT_TOL,
        "max_iter": DEFAULT_MAX_ITER,
    },
}


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    output_path: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise ValidationError("experiment spec must be a JSON object", "bad_spec")
        doc = dict(doc)
        kind = doc.pop("kind", None)
        kind = ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {kind!r}; expected one of {KINDS}", "bad_kind")
        output = doc.pop("output_path", None) or doc.pop("output", None)
        params = dict(DEFAULTS[kind])
        unknown = set(doc) - set(params)
        if unknown:
            raise ValidationError(f"unknown parameters for {kind}: {sorted(unknown)}", "bad_spec")
        params.update(doc)
        spec = cls(kind, params, output)
        spec.validate()
        return spec

    def validate(self) -> None:
        p = self.parameters
        try:
            if self.kind == "s_sweep":
                ChannelProfile(tuple(p["profile"]))
                _positive_int(p["S_max"], "S_max")
            elif self.kind == "sf_vs_aloha_scatter":
                if _positive_int(p["network_count"], "network_count") < 2:
                    raise ValidationError("a slope fit needs network_count >= 2", "bad_network_count")
                if _positive_int(p["M"], "M") < 2:
                    raise ValidationError("symmetric comparison needs M >= 2", "single_node")
                _prob_range(p["p_low"], p["p_high"], allow_zero_low=False)
                _seed(p["seed"])
            else:
                Ms = p["M_list"]
                if not Ms or any(_positive_int(m, "M") < 2 for m in Ms):
                    raise ValidationError("M_list must hold integers >= 2", "single_node")
                if _positive_int(p["sample_count"], "sample_count") < 10:
                    raise ValidationError("sample_count must be >= 10", "bad_sample_count")
                _prob_range(p["p_low"], p["p_high"], allow_zero_low=True)
                _seed(p["seed"])
                if not 0 < float(p["tol"]) <= 1e-6:
                    raise ValidationError("tol must lie in (0, 1e-6]", "bad_tolerance")
                _positive_int(p["max_iter"], "max_iter")
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"malformed {self.kind} parameters: {exc}", "bad_spec") from exc

    def resolved(self) -> dict:
        return {"kind": self.kind, **self.parameters}


def _positive_int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < 1:
        raise ValidationError(f"{name} must be a positive integer, got {v!r}", "bad_spec")
    return int(v)


def _seed(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {v!r}", "bad_seed")
    return v


def _prob_range(lo, hi, allow_zero_low: bool) -> None:
    lo, hi = float(lo), float(hi)
    if not (0.0 <= lo if allow_zero_low else 0.0 < lo) or not lo <= hi <= 1.0 or hi <= 0.0:
        raise ValidationError(f"bad probability range ({lo!r}, {hi!r}]", "bad_range")


def index_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed + index)))


def sample_profile(rng: np.random.Generator, M: int, lo: float, hi: float) -> ChannelProfile:
    """M decode probabilities uniform on (lo, hi], redrawing any below 1e-6."""
    p = lo + (hi - lo) * (1.0 - rng.random(M))
    bad = p < MIN_P
    while bad.any():
        p[bad] = lo + (hi - lo) * (1.0 - rng.random(int(bad.sum())))
        bad = p < MIN_P
    return ChannelProfile(tuple(p))


def _parallel_map(fn: Callable[[int], Any], n: int, threads: int | None) -> list:
    workers = min(threads or thread_count(), n)
    if workers <= 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _header(spec: ExperimentSpec) -> list[str]:
    lines = [
        f"# tool: aoimac {__version__}",
        f"# spec: {json.dumps(spec.resolved(), sort_keys=True, separators=(',', ':'))}",
    ]
    if "seed" in spec.parameters:
        lines.append(f"# seed: {spec.parameters['seed']}")
    return lines


def _render(header: Iterable[str], columns: list[str], rows: Iterable[Iterable], summary: Iterable[str]) -> str:
    out = io.StringIO()
    for line in header:
        out.write(line + "\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(fmt(v) for v in row) + "\n")
    for line in summary:
        out.write(f"# {line}\n")
    return out.getvalue()


@dataclass
class ExperimentOutput:
    text: str
    summary: dict


def run_s_sweep(spec: ExperimentSpec) -> ExperimentOutput:
    profile = ChannelProfile(tuple(spec.parameters["profile"]))
    S_max = int(spec.parameters["S_max"])
    sweep = sf_sweep(profile, S_max)
    M = profile.M
    columns = ["S"]
    for i in range(1, M + 1):
        columns += [f"EZ_{i}", f"EZ2_{i}", f"age_{i}"]
    columns.append("network_age")
    rows = []
    for S in range(1, S_max + 1):
        b = sf_age(SfConfig(profile, S))
        row: list = [S]
        for m, a in zip(b.moments, b.report.per_node):
            row += [m.mean, m.second_moment, a]
        row.append(b.report.network)
        rows.append(row)
    summary = {"best_S": sweep.best_S, "monotone_decreasing": sweep.monotone_decreasing}
    lines = [f"best_S={sweep.best_S}", f"monotone_decreasing={str(sweep.monotone_decreasing).lower()}"]
    return ExperimentOutput(_render(_header(spec), columns, rows, lines), summary)


def run_scatter(spec: ExperimentSpec, threads: int | None = None) -> ExperimentOutput:
    p = spec.parameters
    n, M, lo, hi, seed = int(p["network_count"]), int(p["M"]), float(p["p_low"]), float(p["p_high"]), int(p["seed"])

    def one(k: int):
        return symmetric_compare(sample_profile(index_rng(seed, k), M, lo, hi))

    reports = _parallel_map(one, n, threads)
    x = np.array([r.age_sf for r in reports])
    y = np.array([r.age_aloha for r in reports])
    slope0 = math.fsum(x * y) / math.fsum(x * x)
    dx = x - x.mean()
    if np.any(dx != 0):
        slope = math.fsum(dx * (y - y.mean())) / math.fsum(dx * dx)
        intercept = y.mean() - slope * x.mean()
    else:
        # every network has the same SF age; only the through-origin fit is defined
        slope = intercept = math.nan
    lower, upper, L_M = theorem_bounds(lo, hi, M)
    summary = {
        "slope_through_origin": slope0,
        "affine_slope": float(slope),
        "affine_intercept": float(intercept),
        "bound_lower": math.exp(lower),
        "bound_upper": math.exp(upper),
        "L_M": L_M,
        "max_L": max(r.L for r in reports),
        "min_L": min(r.L for r in reports),
    }
    rows = [[k, r.age_sf, r.age_aloha, r.L] for k, r in enumerate(reports)]
    lines = [f"{k}={fmt(v)}" for k, v in summary.items()]
    return ExperimentOutput(
        _render(_header(spec), ["network_id", "age_sf", "age_aloha", "L"], rows, lines), summary
    )


def approx_error(profile: ChannelProfile, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Relative excess age of the 1/sqrt(p) rule over the optimum, in percent.

    With two nodes the closed-form optimum is the reference.
    """
    if profile.M == 2:
        ref = tau_exact_two(*profile.probs).achieved_age
    else:
        ref = tau_numeric(profile, tol, max_iter).achieved_age
    approx = aloha_age(AlohaConfig(profile, tau_approx(profile).taus)).network
    return abs(approx - ref) / ref * 100.0


def run_approx_cdf(spec: ExperimentSpec, threads: int | None = None) -> ExperimentOutput:
    p = spec.parameters
    n, lo, hi, seed = int(p["sample_count"]), float(p["p_low"]), float(p["p_high"]), int(p["seed"])
    tol, max_iter = float(p["tol"]), int(p["max_iter"])
    rows = []
    summary = {}
    lines = []
    for M in p["M_list"]:
        M = int(M)
        # samples of different M never share a seed
        base = seed + M * n

        def one(k: int):
            prof = sample_profile(index_rng(base, k), M, lo, hi)
            try:
                return approx_error(prof, tol, max_iter)
            except NumericalError as exc:
                log.warning("M=%d sample %d excluded: %s", M, k, exc)
                return None

        errs = _parallel_map(one, n, threads)
        kept = np.sort(np.array([e for e in errs if e is not None]))
        excluded = n - len(kept)
        frac = float(np.mean(kept < 5.0)) if len(kept) else math.nan
        for k, e in enumerate(kept):
            rows.append([M, 100.0 * (k + 1) / len(kept), e])
        summary[M] = {"fraction_below_5pct": frac, "excluded": excluded, "samples": len(kept)}
        lines.append(f"M={M} fraction_below_5pct={fmt(frac)} excluded={excluded}")
    return ExperimentOutput(_render(_header(spec), ["M", "percentile", "error_pct"], rows, lines), summary)


RUNNERS = {
    "s_sweep": lambda spec, threads=None: run_s_sweep(spec),
    "sf_vs_aloha_scatter": run_scatter,
    "approx_error_cdf": run_approx_cdf,
}


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentOutput:
    return RUNNERS[spec.kind](spec, threads)
