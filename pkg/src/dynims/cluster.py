"""Compute-node memory ledger and the memory-pressure slowdown model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .storage import EvictionSummary, StorageTier
from .units import gb


class DispatchError(KeyError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    total_m: int = gb(125)
    reserved: int = gb(5)
    ramdisk_max: int = gb(60)
    cores: int = 24

    def __post_init__(self):
        if self.total_m <= 0 or self.ramdisk_max <= 0 or self.cores <= 0 or self.reserved < 0:
            raise ValueError(f"invalid node spec {self}")
        if self.reserved + self.ramdisk_max > self.total_m:
            raise ValueError("reserved + ramdisk_max exceeds total memory")


@dataclass
class NodeState:
    """Memory ledger of one compute node.

    ``exec_used`` is the resident part of execution memory; the part that
    did not fit lives in ``swap_used``.  The ledger balances as
    ``exec_used + storage_used + reserved + free == total_m``, equivalently
    ``exec_demand + storage_used + reserved + free == total_m + swap_used``.
    """

    exec_used: int = 0
    storage_capacity: int = 0
    storage_used: int = 0
    free: int = 0
    swap_used: int = 0
    slowdown: float = 1.0
    failed: bool = False

    @property
    def exec_demand(self) -> int:
        return self.exec_used + self.swap_used

    def balanced(self, spec: NodeSpec) -> bool:
        return (
            self.exec_demand + self.storage_used + spec.reserved + self.free == spec.total_m + self.swap_used
            and self.free >= 0
            and self.swap_used >= 0
            and (self.swap_used == 0 or self.free == 0)
            and self.storage_used <= self.storage_capacity <= spec.ramdisk_max
            and self.slowdown >= 1.0
        )


def settle_ledger(state: NodeState, spec: NodeSpec, exec_demand: int) -> None:
    """Place ``exec_demand`` in RAM, spilling to swap once memory is full."""
    room = spec.total_m - spec.reserved - state.storage_used
    if exec_demand <= room:
        state.exec_used = exec_demand
        state.swap_used = 0
        state.free = room - exec_demand
    else:
        state.exec_used = max(room, 0)
        state.swap_used = exec_demand - state.exec_used
        state.free = 0


def utilization(state: NodeState, spec: NodeSpec) -> float:
    return (state.exec_used + state.storage_used + spec.reserved + state.swap_used) / spec.total_m


def used_memory(state: NodeState, spec: NodeSpec) -> int:
    """v_i in bytes: everything resident plus swap."""
    return state.exec_used + state.storage_used + spec.reserved + state.swap_used


@dataclass(frozen=True)
class SlowdownModel:
    knee_r: float = 0.95
    full_r: float = 1.0
    f_full: float = 2.0
    swap_half_pct_f: float = 5.0
    swap_one_pct_f: float = 10.0

    def __post_init__(self):
        if not self.knee_r < self.full_r:
            raise ValueError("knee_r must be < full_r")
        if not 1 <= self.f_full <= self.swap_half_pct_f <= self.swap_one_pct_f:
            raise ValueError("need 1 <= f_full <= swap_half_pct_f <= swap_one_pct_f")

    def many(self, r, swap_pct) -> np.ndarray:
        return kernels.slowdown_many(
            np.atleast_1d(np.asarray(r, dtype=np.float64)),
            np.atleast_1d(np.asarray(swap_pct, dtype=np.float64)),
            self.knee_r, self.full_r, self.f_full, self.swap_half_pct_f, self.swap_one_pct_f,
        )


def slowdown_factor(model: SlowdownModel, r: float, swap_pct: float) -> float:
    """Runtime multiplier from memory pressure.

    A linear ramp from 1 at ``knee_r`` to ``f_full`` at ``full_r``, plus a swap
    penalty that is piecewise linear through (0, 0), (0.5%, f_half - f_full),
    (1%, f_one - f_full) and extrapolated past 1%.  ``swap_pct`` is a fraction
    of physical memory (0.005 means 0.5%).
    """
    ramp = (r - model.knee_r) / (model.full_r - model.knee_r)
    ramp = 0.0 if ramp < 0.0 else (1.0 if ramp > 1.0 else ramp)
    f = 1.0 + ramp * (model.f_full - 1.0)
    if swap_pct > 0.0:
        if swap_pct <= 0.005:
            f += swap_pct * (model.swap_half_pct_f - model.f_full) / 0.005
        else:
            f += (model.swap_half_pct_f - model.f_full) + \
                (swap_pct - 0.005) * (model.swap_one_pct_f - model.swap_half_pct_f) / 0.005
    return f


@dataclass
class ComputeNode:
    spec: NodeSpec
    state: NodeState
    tier: StorageTier

    def refresh(self, exec_demand: int, model: SlowdownModel) -> None:
        self.state.storage_used = self.tier.used
        self.state.storage_capacity = self.tier.capacity
        settle_ledger(self.state, self.spec, exec_demand)
        self.state.slowdown = slowdown_factor(
            model, utilization(self.state, self.spec), self.state.swap_used / self.spec.total_m
        )


def apply_capacity(nodes: dict[str, ComputeNode], node_id: str, target: int) -> EvictionSummary:
    """Resize a node's storage tier, evicting synchronously on shrink."""
    if node_id not in nodes:
        raise DispatchError(node_id)
    node = nodes[node_id]
    if not 0 <= target <= node.spec.ramdisk_max:
        raise ValueError(f"target {target} outside [0, {node.spec.ramdisk_max}]")
    summary = node.tier.set_capacity(target)
    st = node.state
    demand = st.exec_demand
    st.storage_used = node.tier.used
    st.storage_capacity = node.tier.capacity
    settle_ledger(st, node.spec, demand)
    return summary
