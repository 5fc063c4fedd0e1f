"""Scenario description and its TOML file format.

A scenario file has these tables (every key optional; defaults shown in
``presets/config3-dynims.toml``)::

    name, seed, duration_ms, tick_ms
    [cluster]     compute_nodes, total_m_gb, reserved_gb, ramdisk_max_gb, cores,
                  data_nodes, data_node_cache_gb, swap_limit_pct
    [controller]  mode = "static" | "dynamic" | "unlimited", static_capacity_gb,
                  lambda, r0, u_min_gb, u_max_gb, interval_ms, dead_band_mb, ema_alpha
    [storage]     block_size_mb, inflation, admission_filter, ghost_factor,
                  aging_period_ms, eviction_ms_per_gb,
                  latency_local_ms, latency_remote_cache_ms, latency_remote_disk_ms
    [hpc]         enabled, baseline_gb, peak_gb, jitter, jitter_step_ms,
                  bursts = [{start_ms, ramp_ms, hold_ms, fall_ms}, ...]
    [analytics]   enabled, dataset_gb, iterations, exec_memory_gb, compute_ms_per_block
    [slowdown]    knee_r, full_r, f_full, swap_half_pct_f, swap_one_pct_f

Sizes in the file are in GB/MB (floats allowed); in memory they are bytes.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import NodeSpec, SlowdownModel
from .control import ConfigError, ControlParams
from .storage import TierLatencies
from .units import GB, MB
from .workload import AnalyticsJob, BurstWindow, HpcTraceProfile, ProfileError

PRESETS = ("config1-spark45", "config2-static25", "config3-dynims", "config4-upper")
MODES = ("static", "dynamic", "unlimited")


class ScenarioError(ValueError):
    def __init__(self, field_name: str, constraint: str):
        super().__init__(f"{field_name}: {constraint}")
        self.field = field_name


@dataclass(frozen=True)
class StorageConfig:
    inflation: float = 1.0
    admission_filter: bool = True
    ghost_factor: int = 4
    aging_period_ms: int = 0
    eviction_ms_per_gb: float = 0.0


@dataclass(frozen=True)
class ControllerMode:
    kind: str = "dynamic"
    static_capacity: int | None = None
    params: ControlParams | None = None
    dead_band: int = 256 * MB
    ema_alpha: float | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int = 0
    duration_ms: int = 1_800_000
    tick_ms: int = 10
    compute_nodes: tuple[NodeSpec, ...] = ()
    data_node_caches: tuple[int, ...] = (80 * GB, 80 * GB)
    swap_limit_frac: float = 0.02
    controller: ControllerMode = field(default_factory=ControllerMode)
    hpc_profile: HpcTraceProfile | None = None
    analytics: AnalyticsJob | None = None
    slowdown: SlowdownModel = field(default_factory=SlowdownModel)
    latencies: TierLatencies = field(default_factory=TierLatencies)
    storage: StorageConfig = field(default_factory=StorageConfig)

    def validate(self) -> "Scenario":
        if self.tick_ms <= 0:
            raise ScenarioError("tick_ms", "must be > 0")
        if self.duration_ms <= 0:
            raise ScenarioError("duration_ms", "must be > 0")
        if not self.compute_nodes:
            raise ScenarioError("cluster.compute_nodes", "need at least one compute node")
        if not self.data_node_caches:
            raise ScenarioError("cluster.data_nodes", "need at least one data node")
        if self.hpc_profile is None and self.analytics is None:
            raise ScenarioError("hpc/analytics", "at least one workload must be present")
        c = self.controller
        if c.kind not in MODES:
            raise ScenarioError("controller.mode", f"must be one of {MODES}")
        ramdisk = min(n.ramdisk_max for n in self.compute_nodes)
        if c.kind == "static":
            if c.static_capacity is None or not 0 <= c.static_capacity <= ramdisk:
                raise ScenarioError("controller.static_capacity_gb", "must lie in [0, ramdisk_max]")
        if c.kind == "dynamic":
            if c.params is None:
                raise ScenarioError("controller", "dynamic mode needs parameters")
            if c.params.interval_t % self.tick_ms:
                raise ScenarioError("tick_ms", "must evenly divide controller.interval_ms")
            if c.params.u_max > ramdisk:
                raise ScenarioError("controller.u_max_gb", "must be <= ramdisk_max")
        if self.hpc_profile is not None:
            try:
                self.hpc_profile.validate(min(n.total_m for n in self.compute_nodes))
            except ProfileError as e:
                raise ScenarioError("hpc", str(e)) from None
        if not 0 < self.swap_limit_frac:
            raise ScenarioError("cluster.swap_limit_pct", "must be > 0")
        if self.storage.inflation < 1.0:
            raise ScenarioError("storage.inflation", "must be >= 1")
        return self

    def initial_capacity(self, spec: NodeSpec) -> int:
        c = self.controller
        if c.kind == "static":
            return c.static_capacity
        if c.kind == "dynamic":
            return c.params.u_max
        return spec.ramdisk_max

    def with_lambda(self, lam: float) -> "Scenario":
        c = self.controller
        if c.params is None:
            raise ScenarioError("controller.lambda", "scenario has no dynamic controller")
        return replace(self, controller=replace(c, params=replace(c.params, lam=lam)))

    def with_dataset(self, nbytes: int) -> "Scenario":
        if self.analytics is None:
            raise ScenarioError("analytics.dataset_gb", "scenario has no analytics job")
        return replace(self, analytics=replace(self.analytics, dataset_bytes=nbytes))

    def workload_key(self) -> tuple:
        a = self.analytics
        return None if a is None else (a.dataset_bytes, a.iterations, a.block_size, len(a.nodes))


_KNOWN = {
    "": {"name", "seed", "duration_ms", "tick_ms", "cluster", "controller", "storage", "hpc",
         "analytics", "slowdown"},
    "cluster": {"compute_nodes", "total_m_gb", "reserved_gb", "ramdisk_max_gb", "cores", "data_nodes",
                "data_node_cache_gb", "swap_limit_pct"},
    "controller": {"mode", "static_capacity_gb", "lambda", "r0", "u_min_gb", "u_max_gb", "interval_ms",
                   "dead_band_mb", "ema_alpha"},
    "storage": {"block_size_mb", "inflation", "admission_filter", "ghost_factor", "aging_period_ms",
                "eviction_ms_per_gb", "latency_local_ms", "latency_remote_cache_ms",
                "latency_remote_disk_ms"},
    "hpc": {"enabled", "baseline_gb", "peak_gb", "jitter", "jitter_step_ms", "bursts"},
    "analytics": {"enabled", "dataset_gb", "iterations", "exec_memory_gb", "compute_ms_per_block"},
    "slowdown": {"knee_r", "full_r", "f_full", "swap_half_pct_f", "swap_one_pct_f"},
}


def _num(table: dict, key: str, default, where: str, kind=float):
    v = table.get(key, default)
    if isinstance(v, bool) and kind is not bool:
        raise ScenarioError(f"{where}{key}", f"expected a number, got {v!r}")
    if kind is bool:
        if not isinstance(v, bool):
            raise ScenarioError(f"{where}{key}", "expected true or false")
        return v
    if not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}{key}", f"expected a number, got {v!r}")
    if kind is int and not float(v).is_integer():
        raise ScenarioError(f"{where}{key}", f"expected an integer, got {v!r}")
    return kind(v)


def from_dict(doc: dict) -> Scenario:
    for table, keys in _KNOWN.items():
        sub = doc if table == "" else doc.get(table, {})
        if not isinstance(sub, dict):
            raise ScenarioError(table, "expected a table")
        for k in sub:
            if k not in keys:
                raise ScenarioError(f"{table + '.' if table else ''}{k}", "unknown key")

    name = doc.get("name", "scenario")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name", "expected a non-empty string")
    seed = _num(doc, "seed", 0, "", int)
    tick = _num(doc, "tick_ms", 10, "", int)

    cl = doc.get("cluster", {})
    n_nodes = _num(cl, "compute_nodes", 4, "cluster.", int)
    if n_nodes < 1:
        raise ScenarioError("cluster.compute_nodes", "must be >= 1")
    try:
        specs = tuple(
            NodeSpec(f"cn{i}", int(_num(cl, "total_m_gb", 125, "cluster.") * GB),
                     int(_num(cl, "reserved_gb", 5, "cluster.") * GB),
                     int(_num(cl, "ramdisk_max_gb", 60, "cluster.") * GB),
                     _num(cl, "cores", 24, "cluster.", int))
            for i in range(n_nodes)
        )
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError("cluster", str(e)) from None
    n_data = _num(cl, "data_nodes", 2, "cluster.", int)
    if n_data < 1:
        raise ScenarioError("cluster.data_nodes", "must be >= 1")
    dn_cache = int(_num(cl, "data_node_cache_gb", 80, "cluster.") * GB)
    swap_limit = _num(cl, "swap_limit_pct", 2.0, "cluster.") / 100.0

    ct = doc.get("controller", {})
    mode = ct.get("mode", "dynamic")
    if mode not in MODES:
        raise ScenarioError("controller.mode", f"must be one of {MODES}")
    params = None
    if mode == "dynamic":
        try:
            params = ControlParams(
                lam=_num(ct, "lambda", 0.5, "controller."),
                r0=_num(ct, "r0", 0.95, "controller."),
                u_min=int(_num(ct, "u_min_gb", 0, "controller.") * GB),
                u_max=int(_num(ct, "u_max_gb", specs[0].ramdisk_max / GB, "controller.") * GB),
                interval_t=_num(ct, "interval_ms", 100, "controller.", int),
                total_m=specs[0].total_m,
            )
        except ConfigError as e:
            raise ScenarioError("controller", str(e)) from None
    static_cap = None
    if mode == "static":
        if "static_capacity_gb" not in ct:
            raise ScenarioError("controller.static_capacity_gb", "required for static mode")
        static_cap = int(_num(ct, "static_capacity_gb", 0, "controller.") * GB)
    ema = ct.get("ema_alpha")
    if ema is not None:
        ema = _num(ct, "ema_alpha", None, "controller.")
        if not 0 < ema <= 1:
            raise ScenarioError("controller.ema_alpha", "must lie in (0, 1]")
    controller = ControllerMode(mode, static_cap, params,
                                int(_num(ct, "dead_band_mb", 256, "controller.") * MB), ema)

    st = doc.get("storage", {})
    block_size = int(_num(st, "block_size_mb", 256, "storage.") * MB)
    if block_size <= 0:
        raise ScenarioError("storage.block_size_mb", "must be > 0")
    try:
        lat = TierLatencies(_num(st, "latency_local_ms", 1.0, "storage."),
                            _num(st, "latency_remote_cache_ms", 10.0, "storage."),
                            _num(st, "latency_remote_disk_ms", 100.0, "storage."))
    except ValueError as e:
        raise ScenarioError("storage.latency_*", str(e)) from None
    storage = StorageConfig(
        inflation=_num(st, "inflation", 1.0, "storage."),
        admission_filter=_num(st, "admission_filter", True, "storage.", bool),
        ghost_factor=_num(st, "ghost_factor", 4, "storage.", int),
        aging_period_ms=_num(st, "aging_period_ms", 0, "storage.", int),
        eviction_ms_per_gb=_num(st, "eviction_ms_per_gb", 0.0, "storage."),
    )

    hp = doc.get("hpc", {})
    profile = None
    if _num(hp, "enabled", True, "hpc.", bool):
        bursts = []
        raw_bursts = hp.get("bursts", [])
        if not isinstance(raw_bursts, list):
            raise ScenarioError("hpc.bursts", "expected an array of tables")
        for i, b in enumerate(raw_bursts):
            where = f"hpc.bursts[{i}]."
            if not isinstance(b, dict):
                raise ScenarioError(f"hpc.bursts[{i}]", "expected a table")
            for k in b:
                if k not in ("start_ms", "ramp_ms", "hold_ms", "fall_ms"):
                    raise ScenarioError(f"{where}{k}", "unknown key")
            bursts.append(BurstWindow(*(_num(b, k, 0, where, int)
                                        for k in ("start_ms", "ramp_ms", "hold_ms", "fall_ms"))))
        profile = HpcTraceProfile(
            baseline=int(_num(hp, "baseline_gb", 35, "hpc.") * GB),
            peak=int(_num(hp, "peak_gb", 75, "hpc.") * GB),
            burst_windows=tuple(bursts),
            jitter=_num(hp, "jitter", 0.01, "hpc."),
            seed=seed,
            horizon_ms=_num(doc, "duration_ms", 1_800_000, "", int),
            jitter_step_ms=_num(hp, "jitter_step_ms", 1000, "hpc.", int),
        )

    an = doc.get("analytics", {})
    job = None
    if _num(an, "enabled", True, "analytics.", bool):
        try:
            job = AnalyticsJob(
                dataset_bytes=int(_num(an, "dataset_gb", 320, "analytics.") * GB),
                block_size=block_size,
                iterations=_num(an, "iterations", 10, "analytics.", int),
                exec_memory=int(_num(an, "exec_memory_gb", 20, "analytics.") * GB),
                nodes=tuple(s.node_id for s in specs),
                compute_ms_per_block=_num(an, "compute_ms_per_block", 20.0, "analytics."),
            )
        except ValueError as e:
            raise ScenarioError("analytics", str(e)) from None

    sd = doc.get("slowdown", {})
    try:
        slowdown = SlowdownModel(*(_num(sd, k, d, "slowdown.") for k, d in (
            ("knee_r", 0.95), ("full_r", 1.0), ("f_full", 2.0), ("swap_half_pct_f", 5.0),
            ("swap_one_pct_f", 10.0))))
    except ValueError as e:
        raise ScenarioError("slowdown", str(e)) from None

    return Scenario(
        name=name, seed=seed, duration_ms=_num(doc, "duration_ms", 1_800_000, "", int), tick_ms=tick,
        compute_nodes=specs, data_node_caches=(dn_cache,) * n_data, swap_limit_frac=swap_limit,
        controller=controller, hpc_profile=profile, analytics=job, slowdown=slowdown,
        latencies=lat, storage=storage,
    ).validate()


def preset_path(name: str) -> Path:
    return Path(str(resources.files("dynims") / "presets" / f"{name}.toml"))


def load_scenario(path_or_preset: str | Path) -> Scenario:
    """Load a scenario file, or a built-in preset by name."""
    p = Path(path_or_preset)
    if not p.exists() and str(path_or_preset) in PRESETS:
        p = preset_path(str(path_or_preset))
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError("<file>", f"no such scenario file or preset: {path_or_preset}") from None
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError("<file>", f"parse error: {e}") from None
    return from_dict(doc)
