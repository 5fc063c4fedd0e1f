"""Monitoring → aggregation → control pipeline over in-process ordered topics.

Samples and commands have a JSON wire form (one document per line when
streamed) so recorded traces can be replayed through the controller.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .cluster import ComputeNode
from .control import CapacityDecision, ControlParams, ControllerState, compute_next_capacity
from .units import MB

log = logging.getLogger(__name__)

SAMPLE_FIELDS = ("host", "timestamp_ms", "mem_total", "mem_used", "mem_free", "storage_used", "swap_used")
METRICS_TOPIC = "metrics"
COMMANDS_TOPIC = "commands"


class DecodeError(ValueError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name


class StaleMetrics(LookupError):
    pass


@dataclass(frozen=True)
class MemorySample:
    host: str
    timestamp_ms: int
    mem_total: int
    mem_used: int
    mem_free: int
    storage_used: int
    swap_used: int

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in SAMPLE_FIELDS}


def encode_sample(sample: MemorySample) -> str:
    return json.dumps(sample.to_dict(), separators=(",", ":"))


def decode_sample(text: str | bytes) -> MemorySample:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DecodeError("<document>", f"malformed JSON ({e.msg})") from None
    if not isinstance(doc, dict):
        raise DecodeError("<document>", "expected a JSON object")
    vals = {}
    for name in SAMPLE_FIELDS:
        if name not in doc:
            raise DecodeError(name, "missing")
        v = doc[name]
        if name == "host":
            if not isinstance(v, str) or not v:
                raise DecodeError(name, "expected a non-empty string")
        else:
            if isinstance(v, bool) or not isinstance(v, int):
                raise DecodeError(name, "expected an integer")
            if v < 0:
                raise DecodeError(name, "must be non-negative")
        vals[name] = v
    if vals["mem_used"] + vals["mem_free"] != vals["mem_total"]:
        raise DecodeError("mem_free", "mem_used + mem_free must equal mem_total")
    return MemorySample(**vals)


@dataclass(frozen=True)
class CapacityCommand:
    host: str
    target_capacity: int
    issued_at_ms: int
    decision: CapacityDecision

    def to_dict(self) -> dict:
        return {
            "host": self.host,
            "target_capacity": self.target_capacity,
            "issued_at_ms": self.issued_at_ms,
            "raw_unclamped": self.decision.raw_unclamped,
            "utilization_r": self.decision.utilization_r,
        }


def encode_command(cmd: CapacityCommand) -> str:
    return json.dumps(cmd.to_dict(), separators=(",", ":"))


def decode_command(text: str) -> CapacityCommand:
    doc = json.loads(text)
    for name in ("host", "target_capacity", "issued_at_ms", "raw_unclamped", "utilization_r"):
        if name not in doc:
            raise DecodeError(name, "missing")
    d = CapacityDecision(doc["host"], doc["target_capacity"], doc["raw_unclamped"], doc["utilization_r"])
    return CapacityCommand(doc["host"], doc["target_capacity"], doc["issued_at_ms"], d)


@dataclass(frozen=True)
class Envelope:
    sequence: int
    payload: object


@dataclass
class BusTopic:
    name: str
    queue: deque = field(default_factory=deque)
    next_seq: int = 0

    def publish(self, payload) -> int:
        seq = self.next_seq
        self.queue.append(Envelope(seq, payload))
        self.next_seq += 1
        return seq

    def drain(self) -> list[Envelope]:
        """FIFO delivery; each envelope is handed out at most once."""
        out = list(self.queue)
        self.queue.clear()
        return out


class Bus:
    def __init__(self):
        self.topics: dict[str, BusTopic] = {}

    def topic(self, name: str) -> BusTopic:
        if name not in self.topics:
            self.topics[name] = BusTopic(name)
        return self.topics[name]

    def publish(self, name: str, payload) -> int:
        return self.topic(name).publish(payload)

    def drain(self, name: str) -> list[Envelope]:
        return self.topic(name).drain()


def sample_node(node: ComputeNode, now: int) -> MemorySample:
    st, spec = node.state, node.spec
    used = st.exec_used + st.storage_used + spec.reserved
    return MemorySample(spec.node_id, int(now), spec.total_m, used, spec.total_m - used,
                        st.storage_used, st.swap_used)


def aggregate_latest(samples: Iterable[MemorySample], host: str, window: tuple[int, int],
                     ema_alpha: float | None = None) -> int:
    """v_i for ``host`` from samples with ``window[0] < timestamp <= window[1]``.

    Latest sample wins unless ``ema_alpha`` is given, in which case an
    exponential moving average over the in-window samples is returned.
    """
    lo, hi = window
    picked = [s for s in samples if s.host == host and lo < s.timestamp_ms <= hi]
    if not picked:
        raise StaleMetrics(f"no sample for {host} in ({lo}, {hi}]")
    picked.sort(key=lambda s: s.timestamp_ms)
    if ema_alpha is None:
        s = picked[-1]
        return s.mem_used + s.swap_used
    acc = float(picked[0].mem_used + picked[0].swap_used)
    for s in picked[1:]:
        acc = ema_alpha * (s.mem_used + s.swap_used) + (1.0 - ema_alpha) * acc
    return int(round(acc))


def control_cycle(params: ControlParams, states: Mapping[str, ControllerState],
                  aggregates: Mapping[str, int | None], now: int,
                  dead_band: int = 256 * MB) -> tuple[list[CapacityCommand], list[str]]:
    """Run the capacity law for every host; return (commands, skipped hosts).

    A host whose aggregate is ``None`` had stale metrics and is skipped.  A
    command is emitted only when the target moves by at least ``dead_band``.
    """
    commands, skipped = [], []
    for host in sorted(aggregates):
        v = aggregates[host]
        if v is None:
            skipped.append(host)
            continue
        st = states[host]
        d = compute_next_capacity(params, st.current_capacity_u, v, node_id=host)
        st.last_decision_at = now
        if abs(d.target_capacity - st.current_capacity_u) >= dead_band:
            if not params.u_min <= d.target_capacity <= params.u_max:
                raise AssertionError(f"clamp violated for {host}: {d}")
            st.current_capacity_u = d.target_capacity
            commands.append(CapacityCommand(host, d.target_capacity, int(now), d))
    return commands, skipped


class ControlPipeline:
    """Agents publish samples; every ``interval_t`` the controller aggregates
    the window and publishes commands, which the dispatcher drains in order."""

    def __init__(self, params: ControlParams, hosts: Iterable[str], dead_band: int = 256 * MB,
                 ema_alpha: float | None = None):
        self.params = params
        self.dead_band = dead_band
        self.ema_alpha = ema_alpha
        self.bus = Bus()
        self.states = {h: ControllerState.initial(h, params) for h in hosts}
        self.window: list[MemorySample] = []
        self.last_ts: dict[str, int] = {}
        self.last_cycle = 0
        self.issued: list[CapacityCommand] = []
        self.skips: list[tuple[int, str]] = []

    def publish_sample(self, sample: MemorySample) -> None:
        prev = self.last_ts.get(sample.host)
        if prev is not None and sample.timestamp_ms <= prev:
            raise ValueError(f"non-increasing timestamp for {sample.host}")
        self.last_ts[sample.host] = sample.timestamp_ms
        self.bus.publish(METRICS_TOPIC, sample)

    def due(self, now: int) -> bool:
        return now - self.last_cycle >= self.params.interval_t

    def cycle(self, now: int) -> list[CapacityCommand]:
        self.window.extend(env.payload for env in self.bus.drain(METRICS_TOPIC))
        lo = now - self.params.interval_t
        aggregates: dict[str, int | None] = {}
        for h in self.states:
            try:
                aggregates[h] = aggregate_latest(self.window, h, (lo, now), self.ema_alpha)
            except StaleMetrics:
                aggregates[h] = None
        self.window = [s for s in self.window if s.timestamp_ms > now]
        cmds, skipped = control_cycle(self.params, self.states, aggregates, now, self.dead_band)
        for h in skipped:
            log.warning("stale metrics for %s at %d ms; skipping", h, now)
            self.skips.append((now, h))
        for c in cmds:
            self.bus.publish(COMMANDS_TOPIC, c)
        self.issued.extend(cmds)
        self.last_cycle = now
        return cmds

    def pending_commands(self) -> list[CapacityCommand]:
        return [env.payload for env in self.bus.drain(COMMANDS_TOPIC)]


def replay(samples: Iterable[MemorySample], params: ControlParams, dead_band: int = 256 * MB,
           ema_alpha: float | None = None) -> list[CapacityCommand]:
    """Drive the control stage from recorded samples instead of the simulator.

    Control cycles fire at every multiple of ``interval_t`` up to the last
    sample; hosts are those seen in the stream.
    """
    samples = sorted(samples, key=lambda s: (s.timestamp_ms, s.host))
    if not samples:
        return []
    hosts = sorted({s.host for s in samples})
    pipe = ControlPipeline(params, hosts, dead_band, ema_alpha)
    T = params.interval_t
    out: list[CapacityCommand] = []
    i = 0
    t = T
    last = samples[-1].timestamp_ms
    while True:
        while i < len(samples) and samples[i].timestamp_ms <= t:
            pipe.publish_sample(samples[i])
            i += 1
        out.extend(pipe.cycle(t))
        pipe.pending_commands()
        if t >= last:
            return out
        t += T
