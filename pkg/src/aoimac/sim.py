"""Slotted Monte Carlo simulation of SF and ALOHA status updating.

Slots are numbered from 1 and an update is stamped with the slot at whose
end the sink decodes it. Every node draws from its own Philox substream,
keyed by ``SeedSequence(seed, spawn_key=(node,))``, so adding nodes never
changes what existing nodes draw. Only uniform doubles are taken from the
streams; geometric turn lengths are produced by inversion here, keeping
runs reproducible independently of numpy's distribution samplers.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .core import AlohaConfig, SfConfig, ValidationError

MAX_HORIZON = 2**40
AGE_BATCHES = 30
SF_CHUNK_ROUNDS = 1 << 15
ALOHA_CHUNK_SLOTS = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    protocol: SfConfig | AlohaConfig
    horizon: int
    seed: int = 0
    warmup_policy: str = "drop-until-first-update"
    record_turns: bool = False

    def __post_init__(self):
        if not isinstance(self.protocol, (SfConfig, AlohaConfig)):
            raise ValidationError("protocol must be an SfConfig or an AlohaConfig", "bad_protocol")
        if int(self.horizon) != self.horizon or not 1 <= self.horizon <= MAX_HORIZON:
            raise ValidationError(f"horizon must be an integer in [1, 2^40], got {self.horizon!r}", "bad_horizon")
        if self.warmup_policy != "drop-until-first-update":
            raise ValidationError(f"unsupported warm-up policy {self.warmup_policy!r}", "bad_warmup")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", "bad_seed")

    @property
    def M(self) -> int:
        return self.protocol.profile.M


@dataclass(frozen=True)
class NodeStats:
    updates: int
    mean_Z: float
    second_Z: float
    se_mean_Z: float
    se_second_Z: float
    age: float
    se_age: float


@dataclass(frozen=True)
class TurnTrace:
    """One entry per SF turn that ended within the horizon."""

    node: np.ndarray
    end_slot: np.ndarray
    length: np.ndarray
    success: np.ndarray


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    timestamps: tuple[np.ndarray, ...]
    stats: tuple[NodeStats, ...]
    turns: TurnTrace | None = field(default=None, repr=False)

    def inter_updates(self, node: int) -> np.ndarray:
        return np.diff(self.timestamps[node])

    @property
    def update_counts(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.timestamps)


def node_stream(seed: int, node: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(node,))))


def geometric_from_uniform(u: np.ndarray, p: float) -> np.ndarray:
    """Trials up to and including the first success, from uniforms in [0, 1)."""
    if p >= 1.0:
        return np.ones(u.shape, dtype=np.int64)
    v = 1.0 - u  # (0, 1]
    g = np.floor(np.log(v) / math.log1p(-p)) + 1.0
    return np.maximum(g, 1.0).astype(np.int64)


def _simulate_sf(cfg: SimConfig, sf: SfConfig):
    p = sf.profile.probs
    S = sf.turn_cap
    M = len(p)
    streams = [node_stream(cfg.seed, i) for i in range(M)]
    stamps: list[list[np.ndarray]] = [[] for _ in range(M)]
    trace: list[tuple[np.ndarray, ...]] = []
    offset = 0
    while offset < cfg.horizon:
        g = np.empty((SF_CHUNK_ROUNDS, M), dtype=np.int64)
        for i, rng in enumerate(streams):
            g[:, i] = geometric_from_uniform(rng.random(SF_CHUNK_ROUNDS), p[i])
        length = np.minimum(g, S)
        success = g <= S
        ends = offset + np.cumsum(length.ravel()).reshape(length.shape)
        offset = int(ends[-1, -1])
        keep = ends <= cfg.horizon
        for i in range(M):
            hit = success[:, i] & keep[:, i]
            stamps[i].append(ends[hit, i])
        if cfg.record_turns:
            k = keep.ravel()
            nodes = np.broadcast_to(np.arange(M), length.shape).ravel()
            trace.append((nodes[k], ends.ravel()[k], length.ravel()[k], success.ravel()[k]))
    turns = None
    if cfg.record_turns:
        turns = TurnTrace(*(np.concatenate(parts) for parts in zip(*trace)))
    return [np.concatenate(s) for s in stamps], turns


def _simulate_aloha(cfg: SimConfig, al: AlohaConfig):
    p = al.profile.probs
    taus = al.attempts
    M = len(p)
    streams = [node_stream(cfg.seed, i) for i in range(M)]
    stamps: list[list[np.ndarray]] = [[] for _ in range(M)]
    start = 0
    while start < cfg.horizon:
        attempt = np.empty((M, ALOHA_CHUNK_SLOTS), dtype=bool)
        decoded = np.empty((M, ALOHA_CHUNK_SLOTS), dtype=bool)
        for i, rng in enumerate(streams):
            attempt[i] = rng.random(ALOHA_CHUNK_SLOTS) < taus[i]
            decoded[i] = rng.random(ALOHA_CHUNK_SLOTS) < p[i]
        n = min(ALOHA_CHUNK_SLOTS, cfg.horizon - start)
        alone = attempt[:, :n].sum(axis=0) == 1
        slots = np.arange(start + 1, start + n + 1, dtype=np.int64)
        for i in range(M):
            stamps[i].append(slots[attempt[i, :n] & decoded[i, :n] & alone])
        start += n
    return [np.concatenate(s) for s in stamps], None


def age_terms(z: np.ndarray) -> tuple[float, float]:
    """Area under the age curve over the given inter-update intervals, and their total length."""
    z = z.astype(float)
    return math.fsum(z * z / 2.0 + z), math.fsum(z)


def _node_stats(ts: np.ndarray) -> NodeStats:
    z = np.diff(ts).astype(float)
    n = len(z)
    if n == 0:
        nan = math.nan
        return NodeStats(len(ts), nan, nan, nan, nan, nan, nan)
    mean = math.fsum(z) / n
    second = math.fsum(z * z) / n
    if n > 1:
        se_mean = float(np.std(z, ddof=1)) / math.sqrt(n)
        se_second = float(np.std(z * z, ddof=1)) / math.sqrt(n)
    else:
        se_mean = se_second = math.nan
    area, span = age_terms(z)
    age = area / span
    k = min(AGE_BATCHES, n)
    if k >= 2:
        batches = [age_terms(b) for b in np.array_split(z, k)]
        vals = np.array([a / s for a, s in batches])
        se_age = float(np.std(vals, ddof=1)) / math.sqrt(k)
    else:
        se_age = math.nan
    return NodeStats(len(ts), mean, second, se_mean, se_second, age, se_age)


def simulate(cfg: SimConfig) -> SimResult:
    """Run one simulation. Identical configs give identical results."""
    if isinstance(cfg.protocol, SfConfig):
        stamps, turns = _simulate_sf(cfg, cfg.protocol)
    else:
        stamps, turns = _simulate_aloha(cfg, cfg.protocol)
    stamps = tuple(s.astype(np.int64) for s in stamps)
    return SimResult(cfg, stamps, tuple(_node_stats(s) for s in stamps), turns)


def empirical_age(result: SimResult, node: int) -> float:
    """Time-average age between a node's first and last recorded update."""
    ts = result.timestamps[node]
    if len(ts) < 2:
        raise ValidationError(f"node {node} has {len(ts)} update(s); age needs at least 2", "too_few_updates")
    return empirical_age_from_samples(np.diff(ts))


def empirical_age_from_samples(z: Sequence[int] | np.ndarray) -> float:
    z = np.asarray(z)
    if len(z) == 0:
        raise ValidationError("no inter-update samples", "too_few_updates")
    area, span = age_terms(z)
    return area / span


@dataclass(frozen=True)
class ReplicationSummary:
    seeds: tuple[int, ...]
    ages: np.ndarray  # (replications, M)
    mean_Z: np.ndarray  # (replications, M)
    mean_age: tuple[float, ...]
    se_age: tuple[float, ...]
    mean_inter_update: tuple[float, ...]
    se_inter_update: tuple[float, ...]


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``AOI_THREADS``; falls back to the CPU count."""
    env = os.environ.get("AOI_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"AOI_THREADS must be an integer, got {env!r}", "bad_threads") from None
        if n < 1:
            raise ValidationError("AOI_THREADS must be >= 1", "bad_threads")
        return n
    return default or os.cpu_count() or 1


def replicate(cfg: SimConfig, replications: int, base_seed: int, threads: int | None = None) -> ReplicationSummary:
    """Independent runs with seeds base_seed, base_seed + 1, ...

    Across-replication standard errors are used when there are at least two
    runs; a single run reports its own batch-means error.
    """
    if int(replications) != replications or replications < 1:
        raise ValidationError(f"replications must be >= 1, got {replications!r}", "bad_replications")
    seeds = tuple(base_seed + k for k in range(replications))
    configs = [
        SimConfig(cfg.protocol, cfg.horizon, s, cfg.warmup_policy) for s in seeds
    ]
    workers = min(threads or thread_count(), replications)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(simulate, configs))
    else:
        results = [simulate(c) for c in configs]
    ages = np.array([[s.age for s in r.stats] for r in results])
    mean_z = np.array([[s.mean_Z for s in r.stats] for r in results])
    if replications >= 2:
        se_age = np.std(ages, axis=0, ddof=1) / math.sqrt(replications)
        se_z = np.std(mean_z, axis=0, ddof=1) / math.sqrt(replications)
    else:
        se_age = np.array([s.se_age for s in results[0].stats])
        se_z = np.array([s.se_mean_Z for s in results[0].stats])
    return ReplicationSummary(
        seeds,
        ages,
        mean_z,
        tuple(float(x) for x in ages.mean(axis=0)),
        tuple(float(x) for x in se_age),
        tuple(float(x) for x in mean_z.mean(axis=0)),
        tuple(float(x) for x in se_z),
    )


def write_trace(result: SimResult, out: IO[str]) -> None:
    """CSV with one row per update: node (1-based), slot, Z (empty for a node's first update)."""
    rows = []
    for i, ts in enumerate(result.timestamps):
        prev = None
        for t in ts.tolist():
            rows.append((t, i, "" if prev is None else t - prev))
            prev = t
    rows.sort()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["node", "slot", "Z"])
    for t, i, z in rows:
        w.writerow([i + 1, t, z])
