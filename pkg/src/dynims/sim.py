"""Tick-driven cluster simulation tying the workloads, tiers and controller together."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import ComputeNode, NodeState, apply_capacity, utilization
from .scenario import Scenario
from .storage import AccessStats, BackingStore, DataNode, StorageTier, hit_ratio
from .telemetry import CapacityCommand, ControlPipeline, MemorySample, sample_node
from .units import GB
from .workload import JobRunner, exec_footprint, gen_hpc_trace

log = logging.getLogger(__name__)

TIMELINE_COLUMNS = ("timestamp_ms", "node_id", "exec_used", "storage_capacity", "storage_used",
                    "free", "swap_used", "slowdown", "utilization")
STORAGE_COLUMNS = ("timestamp_ms", "node_id", "capacity", "used", "hits_local", "hits_remote_cache",
                   "hits_remote_disk", "evictions", "evicted_bytes")


def _node_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class RunReport:
    scenario: str
    job_completion_ms: float | None
    per_iteration_ms: list[float]
    hit_ratio: float | None
    hit_ratio_bytes: float | None
    mean_utilization: dict[str, float]
    peak_utilization: dict[str, float]
    command_count: int
    eviction_bytes: int
    capacity_eviction_bytes: int
    node_failures: list[str]
    aborted: bool
    end_ms: int
    accesses: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "job_completion_ms": self.job_completion_ms,
            "per_iteration_ms": list(self.per_iteration_ms),
            "hit_ratio": self.hit_ratio,
            "hit_ratio_bytes": self.hit_ratio_bytes,
            "mean_utilization": dict(self.mean_utilization),
            "peak_utilization": dict(self.peak_utilization),
            "command_count": self.command_count,
            "eviction_bytes": self.eviction_bytes,
            "capacity_eviction_bytes": self.capacity_eviction_bytes,
            "node_failures": list(self.node_failures),
            "aborted": self.aborted,
            "end_ms": self.end_ms,
            "accesses": dict(self.accesses),
        }


class Simulation:
    def __init__(self, scenario: Scenario, record_timeline: bool = True, check_invariants: bool = False):
        sc = scenario.validate()
        self.sc = sc
        self.tick = sc.tick_ms
        self.now = 0
        self.record_timeline = record_timeline
        self.check_invariants = check_invariants
        job = sc.analytics
        if job is not None:
            catalog = job.catalog()
        else:
            catalog = np.array([256 * 1024 * 1024], dtype=np.int64)
        self.nodes: dict[str, ComputeNode] = {}
        for spec in sc.compute_nodes:
            cap = sc.initial_capacity(spec)
            tier = StorageTier(catalog, cap, max_capacity=spec.ramdisk_max, inflation=sc.storage.inflation,
                               ghost_factor=sc.storage.ghost_factor,
                               admission_filter=sc.storage.admission_filter)
            self.nodes[spec.node_id] = ComputeNode(spec, NodeState(storage_capacity=tier.capacity), tier)
        self.order = [s.node_id for s in sc.compute_nodes]
        self.backing = BackingStore(catalog, [DataNode(c) for c in sc.data_node_caches], sc.latencies)
        self.runner = JobRunner(job, {n: self.nodes[n].tier for n in self.order}, self.backing) \
            if job is not None else None

        n_ticks = sc.duration_ms // self.tick + 2
        grid = np.arange(n_ticks, dtype=np.float64) * self.tick
        self.hpc_demand: dict[str, np.ndarray] = {}
        for i, n in enumerate(self.order):
            if sc.hpc_profile is None:
                self.hpc_demand[n] = np.zeros(n_ticks, dtype=np.int64)
            else:
                prof = replace(sc.hpc_profile, seed=_node_seed(sc.seed, i),
                               horizon_ms=max(sc.hpc_profile.horizon_ms, sc.duration_ms))
                self.hpc_demand[n] = gen_hpc_trace(prof).sample(grid).astype(np.int64)

        c = sc.controller
        self.pipeline = ControlPipeline(c.params, self.order, c.dead_band, c.ema_alpha) \
            if c.kind == "dynamic" else None
        self.stats_interval = c.params.interval_t if c.params is not None else 100

        self.events: list[dict] = []
        self.timeline: list[tuple] = []
        self.storage_rows: list[tuple] = []
        self.commands: list[CapacityCommand] = []
        self.samples: list[MemorySample] = []
        self.failures: list[str] = []
        self.capacity_evicted = 0
        self.job_completed_at: float | None = None
        self._util_sum = {n: 0.0 for n in self.order}
        self._util_peak = {n: 0.0 for n in self.order}
        self._ticks = 0
        self._demand = {n: 0 for n in self.order}
        for n in self.order:
            self._settle(n, 0)

    # -- helpers ---------------------------------------------------------

    def _event(self, t, kind: str, node: str | None = None, **kw) -> None:
        ev = {"t": t, "kind": kind}
        if node is not None:
            ev["node"] = node
        ev.update(kw)
        self.events.append(ev)

    def _settle(self, n: str, k: int) -> None:
        node = self.nodes[n]
        active = self.runner is not None and self.runner.active_on(n) and not node.state.failed
        demand = int(self.hpc_demand[n][min(k, len(self.hpc_demand[n]) - 1)]) + \
            exec_footprint(self.sc.analytics, active)
        self._demand[n] = demand
        node.refresh(demand, self.sc.slowdown)

    def _check_failure(self, n: str, t: int) -> None:
        node = self.nodes[n]
        if node.state.failed:
            return
        if node.state.swap_used > self.sc.swap_limit_frac * node.spec.total_m:
            node.state.failed = True
            self.failures.append(n)
            self._event(t, "node_failure", n, swap_used=node.state.swap_used)
            log.warning("node %s failed at %d ms (swap %d bytes)", n, t, node.state.swap_used)
            if self.runner is not None and not self.runner.done and n in self.runner.job.nodes:
                self.runner.abort(t)
                self._event(t, "job_aborted", n)

    def _dispatch(self, cmd: CapacityCommand, t: int) -> None:
        p = self.sc.controller.params
        if not p.u_min <= cmd.target_capacity <= p.u_max:
            raise AssertionError(f"command outside [U_min, U_max]: {cmd}")
        node = self.nodes[cmd.host]
        summary = apply_capacity(self.nodes, cmd.host, cmd.target_capacity)
        self.capacity_evicted += summary.evicted_bytes
        self._event(t, "capacity", cmd.host, target=cmd.target_capacity,
                    evicted_bytes=summary.evicted_bytes)
        if summary.evicted_bytes and self.sc.storage.eviction_ms_per_gb and self.runner is not None:
            self.runner.stall(cmd.host, summary.evicted_bytes / GB * self.sc.storage.eviction_ms_per_gb)
        node.refresh(self._demand[cmd.host], self.sc.slowdown)

    # -- main loop -------------------------------------------------------

    def step(self) -> None:
        t0 = self.now
        t1 = t0 + self.tick
        k = t0 // self.tick
        for n in self.order:
            self._settle(n, k)
            self._check_failure(n, t0)

        r = self.runner
        if r is not None and not r.done:
            for n in self.order:
                r.advance(n, float(t0), float(self.tick), self.nodes[n].state.slowdown)
            while True:
                end = r.barrier()
                if end is None:
                    break
                rep = r.reports[-1]
                self._event(round(end, 6), "iteration_end", iteration=rep.index,
                            duration_ms=round(rep.duration_ms, 6))
                if r.done:
                    self.job_completed_at = end
                    self._event(round(end, 6), "job_complete")
                    break
                for n in self.order:
                    r.advance(n, end, t1 - end, self.nodes[n].state.slowdown)
            for n in self.order:
                self.nodes[n].refresh(self._demand[n], self.sc.slowdown)
                self._check_failure(n, t1)

        self.now = t1
        if self.sc.storage.aging_period_ms and t1 % self.sc.storage.aging_period_ms == 0:
            for n in self.order:
                self.nodes[n].tier.age()

        if self.pipeline is not None:
            for n in self.order:
                smp = sample_node(self.nodes[n], t1)
                self.pipeline.publish_sample(smp)
                if self.record_timeline:
                    self.samples.append(smp)
            if t1 % self.pipeline.params.interval_t == 0:
                self.pipeline.cycle(t1)
                for h in (h for (tt, h) in self.pipeline.skips if tt == t1):
                    self._event(t1, "stale_metrics", h)
                for cmd in self.pipeline.pending_commands():
                    self.commands.append(cmd)
                    self._dispatch(cmd, t1)

        self._ticks += 1
        for n in self.order:
            node = self.nodes[n]
            st = node.state
            u = utilization(st, node.spec)
            self._util_sum[n] += u
            if u > self._util_peak[n]:
                self._util_peak[n] = u
            if self.check_invariants and not st.balanced(node.spec):
                raise AssertionError(f"ledger out of balance on {n} at {t1}: {st}")
            if self.record_timeline:
                self.timeline.append((t1, n, st.exec_used, st.storage_capacity, st.storage_used, st.free,
                                      st.swap_used, st.slowdown, u))
        if t1 % self.stats_interval == 0:
            for n in self.order:
                tier = self.nodes[n].tier
                s = tier.stats
                self.storage_rows.append((t1, n, tier.capacity, tier.used, s.hits_local, s.hits_remote_cache,
                                          s.hits_remote_disk, s.evictions, s.evicted_bytes))

    def finished(self) -> bool:
        if self.now >= self.sc.duration_ms:
            return True
        return self.runner is not None and self.runner.done

    def run(self) -> "RunResult":
        while not self.finished():
            self.step()
        return RunResult(self.report(), self)

    # -- outputs ---------------------------------------------------------

    def total_stats(self) -> AccessStats:
        total = AccessStats()
        for n in self.order:
            total = total.merged(self.nodes[n].tier.stats)
        return total

    def report(self) -> RunReport:
        stats = self.total_stats()
        r = self.runner
        iters = [rep.duration_ms for rep in r.reports] if r is not None else []
        return RunReport(
            scenario=self.sc.name,
            job_completion_ms=self.job_completed_at,
            per_iteration_ms=iters,
            hit_ratio=hit_ratio(stats) if stats.total else None,
            hit_ratio_bytes=hit_ratio(stats, by_bytes=True) if stats.total else None,
            mean_utilization={n: self._util_sum[n] / max(self._ticks, 1) for n in self.order},
            peak_utilization=dict(self._util_peak),
            command_count=len(self.commands),
            eviction_bytes=stats.evicted_bytes,
            capacity_eviction_bytes=self.capacity_evicted,
            node_failures=list(self.failures),
            aborted=bool(r is not None and r.aborted),
            end_ms=self.now,
            accesses={"local": stats.hits_local, "remote_cache": stats.hits_remote_cache,
                      "remote_disk": stats.hits_remote_disk},
        )


@dataclass
class RunResult:
    report: RunReport
    sim: Simulation

    @property
    def timeline(self) -> list[tuple]:
        return self.sim.timeline

    @property
    def iterations(self):
        return self.sim.runner.reports if self.sim.runner is not None else []
