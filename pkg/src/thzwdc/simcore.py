"""Deterministic discrete-event engine and keyed random streams.

Time is kept as integer nanoseconds. Events with equal ``fire_at`` are
dispatched in the order they were scheduled (the engine-assigned
``sequence``), so a run is a pure function of its inputs and seed.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

EVENT_KINDS = (
    "flow-start",
    "flow-end",
    "blockage-on",
    "blockage-off",
    "reconfig-epoch",
    "collective-step",
    "link-up",
    "reroute",
    "twin-wake",
)

EVENT_LOG_HEADER = ("time_ns", "sequence", "kind", "detail")


class PastEventError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    fire_at: int
    sequence: int
    kind: str
    payload: dict = field(default_factory=dict, compare=False)

    @property
    def detail(self) -> str:
        # stable, order-independent rendering for the event log
        return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(self.payload.items()))


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return "-".join(_fmt(v) for v in value)
    return str(value)


Handler = Callable[["Engine", Event], None]


class Engine:
    """Single-threaded event loop.

    Handlers are registered per event kind with :meth:`on`. A handler may
    schedule further events, including at the current time; those are
    dispatched within the same :meth:`run_until` window.
    """

    def __init__(self) -> None:
        self.now: int = 0
        self._queue: list[tuple[int, int]] = []
        self._events: dict[int, Event] = {}
        self._cancelled: set[int] = set()
        self._next_seq = 0
        self._handlers: dict[str, list[Handler]] = {}
        self._named: set[str] = set()
        self.observers: list[Handler] = []
        self.log: list[Event] = []

    def on(self, kind: str, handler: Handler, *, name: str | None = None) -> None:
        """Register ``handler`` for ``kind``; a repeated ``name`` is ignored."""
        if name is not None:
            if name in self._named:
                return
            self._named.add(name)
        self._handlers.setdefault(kind, []).append(handler)

    def schedule(self, fire_at: int, kind: str, payload: dict | None = None) -> int:
        fire_at = int(fire_at)
        if fire_at < self.now:
            raise PastEventError(f"past event: fire_at={fire_at} < now={self.now}")
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        seq = self._next_seq
        self._next_seq += 1
        self._events[seq] = Event(fire_at, seq, kind, dict(payload or {}))
        heapq.heappush(self._queue, (fire_at, seq))
        return seq

    def cancel(self, event_id: int) -> bool:
        if event_id in self._events and event_id not in self._cancelled:
            self._cancelled.add(event_id)
            return True
        return False

    def pending(self, kind: str | None = None) -> list[Event]:
        """Live queued events in dispatch order (optionally of one kind)."""
        out = [
            self._events[seq]
            for _, seq in sorted(self._queue)
            if seq not in self._cancelled
        ]
        if kind is not None:
            out = [ev for ev in out if ev.kind == kind]
        return out

    def peek_time(self) -> int | None:
        while self._queue and self._queue[0][1] in self._cancelled:
            _, seq = heapq.heappop(self._queue)
            self._cancelled.discard(seq)
            self._events.pop(seq, None)
        return self._queue[0][0] if self._queue else None

    def step(self) -> Event | None:
        """Dispatch the next live event regardless of time horizon."""
        if self.peek_time() is None:
            return None
        fire_at, seq = heapq.heappop(self._queue)
        event = self._events.pop(seq)
        self.now = fire_at
        self.log.append(event)
        for handler in self._handlers.get(event.kind, ()):
            handler(self, event)
        for observer in self.observers:
            observer(self, event)
        return event

    def run_until(self, t_end: int) -> int:
        t_end = int(t_end)
        if t_end < self.now:
            raise PastEventError(f"t_end={t_end} is before now={self.now}")
        count = 0
        while True:
            t = self.peek_time()
            if t is None or t > t_end:
                break
            self.step()
            count += 1
        self.now = t_end
        return count

    def event_log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(EVENT_LOG_HEADER)
        for ev in self.log:
            writer.writerow((ev.fire_at, ev.sequence, ev.kind, ev.detail))
        return buf.getvalue()


def _stream_key(stream_id: str) -> int:
    return int.from_bytes(hashlib.sha256(stream_id.encode("utf-8")).digest()[:8], "little")


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator, so draws for one consumer
    never depend on how many draws another consumer made.
    """

    def __init__(self, seed: int, stream_id: str) -> None:
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream_id = stream_id
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_stream_key(stream_id),))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def uniform(self) -> float:
        return float(self._gen.random())

    def normal(self) -> float:
        return float(self._gen.standard_normal())

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))

    def choice(self, n: int) -> int:
        return int(self._gen.integers(n))

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)


def draw_uniform(stream: RngStream) -> float:
    return stream.uniform()
