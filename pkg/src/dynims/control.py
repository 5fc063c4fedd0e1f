"""Proportional feedback law for in-memory storage capacity."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .units import gb


class ConfigError(ValueError):
    """Controller or scenario parameters violate their invariants."""


class InputError(ValueError):
    """A measurement handed to the controller is out of range."""


@dataclass(frozen=True)
class ControlParams:
    lam: float = 0.5
    r0: float = 0.95
    u_min: int = 0
    u_max: int = gb(60)
    interval_t: int = 100  # ms
    total_m: int = gb(125)

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        if not 0 < self.r0 < 1:
            raise ConfigError(f"r0 must lie in (0, 1), got {self.r0}")
        if not 0 <= self.u_min <= self.u_max <= self.total_m:
            raise ConfigError(
                f"need 0 <= u_min <= u_max <= total_m, got {self.u_min}, {self.u_max}, {self.total_m}"
            )
        if not self.interval_t > 0:
            raise ConfigError(f"interval_t must be > 0, got {self.interval_t}")
        if self.lam > 2:
            warnings.warn(f"lam={self.lam} is outside the evaluated range (0, 2]", stacklevel=3)

    def clamp(self, u: int) -> int:
        return min(max(u, self.u_min), self.u_max)


@dataclass
class ControllerState:
    node_id: str
    current_capacity_u: int
    last_decision_at: int = -1

    @classmethod
    def initial(cls, node_id: str, params: ControlParams) -> "ControllerState":
        # the tier starts with the whole RAMdisk
        return cls(node_id, params.u_max)


@dataclass(frozen=True)
class CapacityDecision:
    node_id: str
    target_capacity: int
    raw_unclamped: int
    utilization_r: float

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "target_capacity": self.target_capacity,
            "raw_unclamped": self.raw_unclamped,
            "utilization_r": self.utilization_r,
        }


def compute_next_capacity(params: ControlParams, u_i: int, v_i: int, node_id: str = "") -> CapacityDecision:
    """One step of the capacity law.

    ``v_i`` is the node's total used memory (storage occupancy and swap
    included), so ``v_i / total_m`` may exceed 1 under swap.  The update is
    evaluated in float64, truncated toward zero, then clamped.
    """
    if u_i < 0 or v_i < 0:
        raise InputError(f"capacity and usage must be non-negative, got u={u_i}, v={v_i}")
    if not params.u_min <= u_i <= params.u_max:
        raise InputError(f"u_i={u_i} outside [{params.u_min}, {params.u_max}]")
    v = float(v_i)
    r = v / float(params.total_m)
    raw = float(u_i) - params.lam * v * (r - params.r0) / params.r0
    raw_int = int(raw)
    return CapacityDecision(node_id, params.clamp(raw_int), raw_int, r)


def fixed_point_capacity(params: ControlParams, exec_demand: int) -> int:
    """Capacity at which a full tier puts utilization exactly at ``r0``."""
    if exec_demand < 0:
        raise InputError(f"exec_demand must be >= 0, got {exec_demand}")
    return params.clamp(int(params.r0 * params.total_m) - exec_demand)


def stability_margin(params: ControlParams) -> float:
    """|1 - lam|: eigenvalue magnitude of the linearised loop at the fixed point."""
    return abs(1.0 - params.lam)


def closed_loop_trajectory(params: ControlParams, exec_demand: int, steps: int, u0: int | None = None) -> np.ndarray:
    """Capacities u_0..u_steps with a full tier, i.e. v = exec_demand + u."""
    u0 = params.u_max if u0 is None else u0
    return closed_loop_many(params, [params.lam], exec_demand, steps, u0)[0]


def closed_loop_many(params: ControlParams, lams, exec_demand: int, steps: int, u0: int | None = None) -> np.ndarray:
    u0 = params.u_max if u0 is None else u0
    return kernels.closed_loop(
        np.asarray(lams, dtype=np.float64),
        float(params.r0),
        np.int64(params.total_m),
        np.int64(params.u_min),
        np.int64(params.u_max),
        np.int64(exec_demand),
        np.int64(u0),
        int(steps),
    )


@dataclass(frozen=True)
class StabilitySummary:
    lam: float
    fixed_point: int
    settling_intervals: int | None  # None: never settled within the horizon
    max_overshoot: int  # bytes past the fixed point on the far side of u0
    monotone: bool
    bounded: bool


def summarize_trajectory(traj: np.ndarray, fixed_point: int, band: int, lam: float,
                         u_min: int, u_max: int) -> StabilitySummary:
    err = traj.astype(np.int64) - fixed_point
    outside = np.nonzero(np.abs(err) > band)[0]
    if len(outside) == 0:
        settle = 0
    elif outside[-1] == len(traj) - 1:
        settle = None
    else:
        settle = int(outside[-1]) + 1
    side = np.sign(err[0])
    overshoot = int(max(0, (-side * err).max())) if side != 0 else int(np.abs(err).max())
    steps = np.diff(traj)
    monotone = bool(np.all(steps <= 0) or np.all(steps >= 0))
    bounded = bool(traj.min() >= u_min and traj.max() <= u_max)
    return StabilitySummary(lam, fixed_point, settle, overshoot, monotone, bounded)


def stability_sweep(params: ControlParams, lams, exec_demand: int, steps: int = 200,
                    band_frac_of_m: float = 0.01) -> list[StabilitySummary]:
    """Closed-loop settling/overshoot summary for each gain in ``lams``."""
    fp = fixed_point_capacity(params, exec_demand)
    trajs = closed_loop_many(params, lams, exec_demand, steps)
    band = int(band_frac_of_m * params.total_m)
    return [
        summarize_trajectory(t, fp, band, float(lam), params.u_min, params.u_max)
        for lam, t in zip(lams, trajs)
    ]
