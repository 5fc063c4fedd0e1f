"""Workload generators: bursty HPC memory demand and an iterative scan job."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .storage import LOCAL, REMOTE_CACHE, REMOTE_DISK, BackingStore, StorageTier, access
from .units import MB, gb


class ProfileError(ValueError):
    pass


class JobAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class BurstWindow:
    start_ms: int
    ramp_ms: int
    hold_ms: int
    fall_ms: int

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.ramp_ms + self.hold_ms + self.fall_ms


@dataclass(frozen=True)
class HpcTraceProfile:
    baseline: int = gb(35)
    peak: int = gb(75)
    burst_windows: tuple[BurstWindow, ...] = ()
    jitter: float = 0.01
    seed: int = 0
    horizon_ms: int = 1_800_000
    jitter_step_ms: int = 1000

    def validate(self, total_m: int | None = None) -> None:
        if not 0 <= self.baseline <= self.peak:
            raise ProfileError("need 0 <= baseline <= peak")
        if total_m is not None and self.peak > total_m:
            raise ProfileError("peak exceeds node memory")
        if not 0 <= self.jitter <= 0.2:
            raise ProfileError("jitter must lie in [0, 0.2]")
        if self.jitter_step_ms <= 0 or self.horizon_ms <= 0:
            raise ProfileError("horizon_ms and jitter_step_ms must be positive")
        prev_end = -1
        for w in self.burst_windows:
            if w.start_ms < 0 or w.ramp_ms < 1 or w.fall_ms < 1 or w.hold_ms < 0:
                raise ProfileError(f"bad burst window {w}")
            if w.start_ms <= prev_end:
                raise ProfileError("burst windows overlap or are not sorted")
            prev_end = w.end_ms


@dataclass(frozen=True)
class DemandTimeline:
    """Breakpoints (ms, bytes) with linear interpolation; flat outside."""

    ts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.ts) == 0 or len(self.ts) != len(self.values):
            raise ProfileError("timeline needs matching, non-empty arrays")
        if np.any(np.diff(self.ts) <= 0):
            raise ProfileError("timeline timestamps must be strictly increasing")
        if np.any(self.values < 0):
            raise ProfileError("timeline values must be >= 0")

    def sample(self, times) -> np.ndarray:
        q = np.asarray(times, dtype=np.float64)
        return kernels.sample_timeline(self.ts, self.values, np.atleast_1d(q))

    def at(self, t: float) -> int:
        return int(self.sample([t])[0])

    @classmethod
    def constant(cls, value: int) -> "DemandTimeline":
        return cls(np.array([0.0]), np.array([float(value)]))


def gen_hpc_trace(profile: HpcTraceProfile) -> DemandTimeline:
    """Trapezoidal bursts over a baseline with seeded multiplicative jitter."""
    profile.validate()
    corners = [(0.0, profile.baseline)]
    for w in profile.burst_windows:
        s = float(w.start_ms)
        corners += [
            (s, profile.baseline),
            (s + w.ramp_ms, profile.peak),
            (s + w.ramp_ms + w.hold_ms, profile.peak),
            (float(w.end_ms), profile.baseline),
        ]
    corners.append((float(max(profile.horizon_ms, corners[-1][0] + 1)), profile.baseline))
    ct = np.array([c[0] for c in corners])
    cv = np.array([float(c[1]) for c in corners], dtype=np.float64)
    ct, keep = np.unique(ct, return_index=True)
    cv = cv[keep]
    if profile.jitter == 0:
        return DemandTimeline(ct, cv)
    grid = np.arange(0.0, ct[-1], float(profile.jitter_step_ms))
    ts = np.union1d(ct, grid)
    base = np.interp(ts, ct, cv)
    rng = np.random.default_rng(profile.seed)
    noise = rng.uniform(-profile.jitter, profile.jitter, size=len(ts))
    return DemandTimeline(ts, base * (1.0 + noise))


@dataclass(frozen=True)
class AnalyticsJob:
    dataset_bytes: int = gb(320)
    block_size: int = 256 * MB
    iterations: int = 10
    exec_memory: int = gb(20)
    nodes: tuple[str, ...] = ()
    compute_ms_per_block: float = 20.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.block_size <= 0 or self.dataset_bytes <= 0:
            raise ValueError("dataset and block size must be positive")

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.dataset_bytes / self.block_size)

    def catalog(self) -> np.ndarray:
        sizes = np.full(self.n_blocks, self.block_size, dtype=np.int64)
        tail = self.dataset_bytes - self.block_size * (self.n_blocks - 1)
        sizes[-1] = tail
        return sizes

    def partitions(self) -> dict[str, np.ndarray]:
        """Contiguous, near-equal slices of the block ids, one per node."""
        parts = np.array_split(np.arange(self.n_blocks, dtype=np.int64), len(self.nodes))
        return dict(zip(self.nodes, parts))


def exec_footprint(job: AnalyticsJob | None, analytics_active: bool) -> int:
    if job is None or not analytics_active:
        return 0
    return job.exec_memory


@dataclass
class IterationReport:
    index: int
    start_ms: float
    duration_ms: float
    per_tier_access_counts: dict[str, int]
    per_node_ms: dict[str, float] = field(default_factory=dict)
    aborted: bool = False

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "start_ms": self.start_ms,
            "duration_ms": self.duration_ms,
            "per_tier_access_counts": dict(self.per_tier_access_counts),
            "per_node_ms": dict(self.per_node_ms),
            "aborted": self.aborted,
        }


class _NodeCursor:
    __slots__ = ("order", "pos", "remaining", "finished_at")

    def __init__(self, order: np.ndarray):
        self.order = order
        self.pos = 0
        self.remaining = 0.0
        self.finished_at: float | None = None


class JobRunner:
    """Barrier-synchronised scans of each node's partition.

    The simulator hands every node a time budget per tick; the cost of a
    block (access latency plus compute, times the node's slowdown at the
    moment the block is read) is paid down from that budget.
    """

    def __init__(self, job: AnalyticsJob, tiers: Mapping[str, StorageTier], backing: BackingStore,
                 start_ms: float = 0.0):
        self.job = job
        self.tiers = tiers
        self.backing = backing
        self.parts = job.partitions()
        self.reports: list[IterationReport] = []
        self.iteration = 0
        self.done = False
        self.aborted = False
        self._begin(start_ms)

    def _begin(self, t: float) -> None:
        self.iter_start = t
        self.cursors = {n: _NodeCursor(self.parts[n]) for n in self.job.nodes}
        self.counts = {LOCAL: 0, REMOTE_CACHE: 0, REMOTE_DISK: 0}

    def active_on(self, node_id: str) -> bool:
        return not self.done and node_id in self.cursors

    def stall(self, node_id: str, ms: float) -> None:
        cur = self.cursors.get(node_id)
        if cur is not None and cur.finished_at is None:
            cur.remaining += ms

    def advance(self, node_id: str, t: float, budget: float, slowdown: float) -> None:
        """Spend ``budget`` ms of node time starting at simulated time ``t``."""
        if self.done:
            return
        cur = self.cursors[node_id]
        tier = self.tiers[node_id]
        compute = self.job.compute_ms_per_block
        while budget > 0.0 and cur.finished_at is None:
            if cur.remaining <= 0.0:
                if cur.pos == len(cur.order):
                    cur.finished_at = t
                    break
                res = access(tier, self.backing, int(cur.order[cur.pos]), int(t))
                self.counts[res.tier_hit] += 1
                cur.pos += 1
                cur.remaining = (res.latency_ms + compute) * slowdown
            spend = cur.remaining if cur.remaining < budget else budget
            cur.remaining -= spend
            budget -= spend
            t += spend
        if cur.finished_at is None and cur.remaining <= 0.0 and cur.pos == len(cur.order):
            cur.finished_at = t

    def barrier(self) -> float | None:
        """If every node finished, close the iteration and return its end time."""
        if self.done or any(c.finished_at is None for c in self.cursors.values()):
            return None
        end = max(c.finished_at for c in self.cursors.values())
        self.reports.append(IterationReport(
            self.iteration, self.iter_start, end - self.iter_start, dict(self.counts),
            {n: c.finished_at - self.iter_start for n, c in self.cursors.items()},
        ))
        self.iteration += 1
        if self.iteration >= self.job.iterations:
            self.done = True
        else:
            self._begin(end)
        return end

    def abort(self, t: float) -> None:
        if self.done:
            return
        self.reports.append(IterationReport(
            self.iteration, self.iter_start, t - self.iter_start, dict(self.counts), aborted=True,
        ))
        self.done = True
        self.aborted = True


def run_iteration(job: AnalyticsJob, tiers: Mapping[str, StorageTier], backing: BackingStore,
                  clock: float = 0.0,
                  slowdown: Callable[[str, float], float] | float = 1.0,
                  failed: Sequence[str] = (), tick_ms: float = 10.0) -> IterationReport:
    """Run one barrier-synchronised iteration outside the full simulator.

    ``slowdown`` is either a constant or ``f(node_id, t)``.  Raises
    ``JobAborted`` (carrying the partial report) if any participating node is
    in ``failed``.
    """
    runner = JobRunner(job, tiers, backing, start_ms=clock)
    runner.job = AnalyticsJob(job.dataset_bytes, job.block_size, 1, job.exec_memory, job.nodes,
                              job.compute_ms_per_block)
    if any(n in failed for n in job.nodes):
        runner.abort(clock)
        raise JobAborted(runner.reports[-1])
    sd = slowdown if callable(slowdown) else (lambda _n, _t, _s=float(slowdown): _s)
    t = clock
    while True:
        for n in job.nodes:
            runner.advance(n, t, tick_ms, sd(n, t))
        if runner.barrier() is not None:
            return runner.reports[-1]
        t += tick_ms
