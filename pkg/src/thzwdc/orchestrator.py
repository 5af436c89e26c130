"""Workload-driven THz link selection and the digital-twin control loop.

Each epoch the active THz link set is re-chosen as a degree-constrained
maximum-weight b-matching over the candidate links (rack degree capped by
its radio count). Between epochs a twin mirrors per-link state and reroutes
traffic away from blocked beams, optionally before a predicted blockage.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from . import costmodels as cm
from .channel import DEFAULT_NLOS_LOSS_DB, BlockageState
from .fabric import (
    InvariantViolation,
    Link,
    Path,
    Topology,
    TrafficMatrix,
    link_key,
    node_key,
    route,
    route_all,
)
from .simcore import Engine, Event, RngStream

DEFAULT_STEERING_DELAY_NS = 100
DEFAULT_BLOCKAGE_MEAN_ON_NS = 50_000_000  # 50 ms
DEFAULT_BLOCKAGE_MEAN_OFF_NS = 5_000_000_000  # 5 s
DEFAULT_MIN_NLOS_RATE_BPS = 10e9
EXACT_EDGE_LIMIT = 28

RECONFIG_LOG_HEADER = ("epoch", "time_ns", "activated", "deactivated", "objective", "matched_weight")

Key = tuple[str, str]


@dataclass(frozen=True)
class Objective:
    kind: str = "bandwidth"
    bandwidth_weight: float = 0.5
    latency_weight: float = 0.5

    def __post_init__(self):
        if self.kind not in ("bandwidth", "latency", "balanced"):
            raise ValueError(f"unknown objective {self.kind!r}")
        if self.kind == "balanced" and not math.isclose(self.bandwidth_weight + self.latency_weight, 1.0):
            raise ValueError("balanced weights must sum to 1")


@dataclass(frozen=True)
class ReconfigPlan:
    activate: tuple[Key, ...] = ()
    deactivate: tuple[Key, ...] = ()
    steering_delay_ns: Mapping[Key, int] = field(default_factory=dict)
    epoch_id: int = 0
    selected: tuple[Key, ...] = ()
    matched_weight: float = 0.0

    def __post_init__(self):
        if set(self.activate) & set(self.deactivate):
            raise ValueError("a link cannot be both activated and deactivated")

    @property
    def empty(self) -> bool:
        return not self.activate and not self.deactivate


# --- link selection ---------------------------------------------------------

def _sort_key(k: Key):
    return (node_key(k[0]), node_key(k[1]))


def edge_weights(
    candidates: Sequence[Link],
    tm: TrafficMatrix,
    objective: Objective,
    switched_latency_ns: Mapping[Key, float] | None = None,
) -> dict[Key, float]:
    """Matching weight of each candidate under ``objective``.

    Demand is counted in both directions, since a link's capacity is shared.
    """
    demand = tm.undirected()
    bw: dict[Key, float] = {}
    lat: dict[Key, float] = {}
    need_latency = objective.kind != "bandwidth"
    if need_latency and switched_latency_ns is None:
        raise ValueError("latency-aware objectives need switched_latency_ns")
    for link in candidates:
        d = demand.get(link.key, 0.0)
        bw[link.key] = min(d, link.rate_bps) if link.rate_bps > 0 else 0.0
        if need_latency:
            if link.rate_bps > 0:
                thz_ns = cm.link_latency("thz", link.length_m, link.rate_bps).total_ns
                saved = max(0.0, switched_latency_ns.get(link.key, 0.0) - thz_ns)
            else:
                saved = 0.0
            lat[link.key] = d / 1e9 * saved
    if objective.kind == "bandwidth":
        return bw
    if objective.kind == "latency":
        return lat
    bmax = max(bw.values(), default=0.0) or 1.0
    lmax = max(lat.values(), default=0.0) or 1.0
    return {k: objective.bandwidth_weight * bw[k] / bmax + objective.latency_weight * lat[k] / lmax
            for k in bw}


def greedy_b_matching(weights: Mapping[Key, float], caps: Mapping[str, int]) -> list[Key]:
    """Heaviest-first admission; ties go to the lexicographically lower pair."""
    spare = dict(caps)
    chosen = []
    for k in sorted(weights, key=lambda k: (-weights[k], _sort_key(k))):
        if weights[k] <= 0:
            break
        a, b = k
        if spare.get(a, 0) > 0 and spare.get(b, 0) > 0:
            spare[a] -= 1
            spare[b] -= 1
            chosen.append(k)
    return chosen


def exact_b_matching(weights: Mapping[Key, float], caps: Mapping[str, int]) -> list[Key]:
    """Optimal b-matching by branch and bound, seeded with the greedy answer.

    Only strictly better solutions replace the incumbent, so among optima the
    greedy one (or the first found in heaviest-first order) is kept.
    """
    edges = [k for k in sorted(weights, key=lambda k: (-weights[k], _sort_key(k))) if weights[k] > 0]
    w = [weights[k] for k in edges]
    incumbent = greedy_b_matching(weights, caps)
    best = [sum(weights[k] for k in incumbent), list(incumbent)]
    eps = 1e-12 * max(1.0, sum(w))
    spare = {n: caps.get(n, 0) for k in edges for n in k}
    chosen: list[Key] = []

    def bound(i: int, current: float) -> float:
        # each node can still absorb at most its best ``spare`` incident edges
        per_node: dict[str, list[float]] = {}
        for j in range(i, len(edges)):
            a, b = edges[j]
            if spare[a] > 0 and spare[b] > 0:
                per_node.setdefault(a, []).append(w[j])
                per_node.setdefault(b, []).append(w[j])
        # lists are already descending because edges are weight-sorted
        node_bound = 0.5 * sum(sum(ws[:spare[n]]) for n, ws in per_node.items())
        return current + node_bound

    def search(i: int, current: float) -> None:
        if current > best[0] + eps:
            best[0] = current
            best[1] = list(chosen)
        if i == len(edges) or bound(i, current) <= best[0] + eps:
            return
        a, b = edges[i]
        if spare[a] > 0 and spare[b] > 0:
            spare[a] -= 1
            spare[b] -= 1
            chosen.append(edges[i])
            search(i + 1, current + w[i])
            chosen.pop()
            spare[a] += 1
            spare[b] += 1
        search(i + 1, current)

    search(0, 0.0)
    return best[1]


def select_links(
    candidates: Sequence[Link],
    tm: TrafficMatrix,
    radio_caps: Mapping[str, int],
    objective: Objective = Objective(),
    *,
    switched_latency_ns: Mapping[Key, float] | None = None,
    current: Iterable[Key] = (),
    epoch_id: int = 0,
    steering_delay_ns: int = DEFAULT_STEERING_DELAY_NS,
    exact_edge_limit: int = EXACT_EDGE_LIMIT,
) -> ReconfigPlan:
    """Pick the THz link set for ``tm`` and express it as a delta on ``current``.

    Instances with at most ``exact_edge_limit`` positive-weight candidates are
    solved exactly; larger ones use the greedy heuristic (>= half optimal).
    """
    weights = edge_weights(candidates, tm, objective, switched_latency_ns)
    positive = sum(1 for v in weights.values() if v > 0)
    if positive <= exact_edge_limit:
        chosen = exact_b_matching(weights, radio_caps)
    else:
        chosen = greedy_b_matching(weights, radio_caps)
    chosen = sorted(chosen, key=_sort_key)
    current = set(current)
    activate = tuple(k for k in chosen if k not in current)
    deactivate = tuple(sorted(current - set(chosen), key=_sort_key))
    return ReconfigPlan(
        activate=activate,
        deactivate=deactivate,
        steering_delay_ns={k: steering_delay_ns for k in activate},
        epoch_id=epoch_id,
        selected=tuple(chosen),
        matched_weight=sum(weights[k] for k in chosen),
    )


def switched_latencies(topo: Topology, pairs: Iterable[Key], frame_bits: float = cm.DEFAULT_FRAME_BITS,
                       params: cm.LatencyParams = cm.DEFAULT_LATENCY) -> dict[Key, float]:
    """Latency of each pair over the backbone with every THz link ignored."""
    backbone = topo.copy()
    for key, link in topo.links.items():
        if link.medium == "thz":
            backbone.links[key] = replace(link, state="inactive")
    return {link_key(*p): route(backbone, *p, frame_bits=frame_bits, params=params).latency_ns
            for p in pairs}


# --- applying plans -----------------------------------------------------------

def apply_plan(topo: Topology, plan: ReconfigPlan, engine: Engine) -> list[int]:
    """Deactivate now; activations go ``pending`` until their steering delay elapses.

    Returns the ids of the scheduled ``link-up`` events. A plan that would
    overrun a rack's radios raises :class:`InvariantViolation`.
    """
    committed = {r: topo.radio_degree(r) for r in topo.racks}
    for a, b in plan.deactivate:
        if topo.links[(a, b)].state != "inactive":
            committed[a] -= 1
            committed[b] -= 1
    for a, b in plan.activate:
        if topo.links[(a, b)].state == "inactive":
            committed[a] += 1
            committed[b] += 1
    for r, used in committed.items():
        if used > topo.racks[r].radio_count:
            raise InvariantViolation(f"plan overruns radios on {r}: {used} > {topo.racks[r].radio_count}")

    def link_up(eng: Engine, ev: Event) -> None:
        key = (ev.payload["a"], ev.payload["b"])
        if topo.links[key].state == "pending":
            topo.set_link(key, state="active")

    engine.on("link-up", link_up, name=f"apply_plan:{id(topo)}")
    for key in plan.deactivate:
        topo.set_link(key, state="inactive")
    ids = []
    for key in plan.activate:
        topo.set_link(key, state="pending")
        delay = int(plan.steering_delay_ns.get(key, DEFAULT_STEERING_DELAY_NS))
        ids.append(engine.schedule(engine.now + delay, "link-up", {"a": key[0], "b": key[1]}))
    topo.check_invariants()
    return ids


# --- digital twin -------------------------------------------------------------

@dataclass(frozen=True)
class TwinLink:
    state: str
    blockage: str
    snr_db: float
    rate_bps: float
    nlos_rate_bps: float
    utilization: float
    last_update_ns: int


@dataclass(frozen=True)
class FabricSnapshot:
    now_ns: int
    links: Mapping[Key, TwinLink]
    scheduled_blockages: tuple[tuple[int, Key], ...] = ()


@dataclass(frozen=True)
class TwinState:
    links: Mapping[Key, TwinLink] = field(default_factory=dict)
    predicted: tuple[tuple[int, Key], ...] = ()
    rerouted: frozenset = frozenset()


@dataclass(frozen=True)
class RerouteAction:
    key: Key
    via: str  # "nlos" or "optical"
    preemptive: bool
    issued_ns: int


def twin_diff(twin: TwinState, snapshot: FabricSnapshot) -> list[str]:
    """Field-level differences between the twin and the fabric."""
    out = []
    for key in sorted(set(twin.links) | set(snapshot.links), key=_sort_key):
        a, b = twin.links.get(key), snapshot.links.get(key)
        if a is None or b is None:
            out.append(f"{key}: presence")
            continue
        for name in TwinLink.__dataclass_fields__:
            if getattr(a, name) != getattr(b, name):
                out.append(f"{key}.{name}")
    if twin.predicted != snapshot.scheduled_blockages:
        out.append("predicted")
    return out


def twin_step(
    twin: TwinState,
    snapshot: FabricSnapshot,
    *,
    predictions: bool = False,
    lookahead_ns: int = 0,
    min_nlos_rate_bps: float = DEFAULT_MIN_NLOS_RATE_BPS,
) -> tuple[TwinState, list[RerouteAction]]:
    """Reconcile ``twin`` to ``snapshot`` and decide reroutes.

    A link newly seen blocked while carrying a beam triggers a reactive
    reroute; with predictions on, a blockage due within ``lookahead_ns``
    triggers a preemptive one. NLoS is preferred when its rate clears
    ``min_nlos_rate_bps``, otherwise traffic falls back to the backbone.
    """
    if twin.links and set(twin.links) != set(snapshot.links):
        raise ValueError("twin and fabric snapshot cover different link sets")
    now = snapshot.now_ns
    actions: list[RerouteAction] = []
    handled = set(twin.rerouted)

    def via(link: TwinLink) -> str:
        return "nlos" if link.nlos_rate_bps >= min_nlos_rate_bps else "optical"

    for key in sorted(snapshot.links, key=_sort_key):
        cur = snapshot.links[key]
        prev = twin.links.get(key)
        was_blocked = prev is not None and prev.blockage == "blocked"
        if (cur.blockage == "blocked" and not was_blocked and key not in handled
                and cur.state != "inactive"):
            actions.append(RerouteAction(key, via(cur), False, now))
            handled.add(key)

    upcoming = set()
    if predictions:
        for fire_at, key in snapshot.scheduled_blockages:
            if now < fire_at <= now + lookahead_ns:
                upcoming.add(key)
                cur = snapshot.links[key]
                if key not in handled and cur.state in ("active", "pending") and cur.blockage != "blocked":
                    actions.append(RerouteAction(key, via(cur), True, now))
                    handled.add(key)

    fresh = {a.key for a in actions}
    keep = frozenset(
        k for k in handled
        if k in fresh or k in upcoming or snapshot.links[k].blockage == "blocked"
    )
    new_twin = TwinState(dict(snapshot.links), tuple(snapshot.scheduled_blockages), keep)
    return new_twin, actions


# --- epoch-driven fabric simulation ------------------------------------------

@dataclass(frozen=True)
class BlockageDynamics:
    mean_on_ns: float = DEFAULT_BLOCKAGE_MEAN_ON_NS
    mean_off_ns: float = DEFAULT_BLOCKAGE_MEAN_OFF_NS


@dataclass
class EpochMetrics:
    served_fraction: float
    mean_latency_ns: float
    p50_latency_ns: float
    p99_latency_ns: float
    reconfigurations: int
    blocked_time_ns: dict[str, int]
    bits_offered: float
    bits_served: float
    bits_lost: float
    energy_pj_per_bit: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "served_fraction": self.served_fraction,
            "mean_latency_ns": self.mean_latency_ns,
            "p50_latency_ns": self.p50_latency_ns,
            "p99_latency_ns": self.p99_latency_ns,
            "reconfigurations": self.reconfigurations,
            "blocked_time_ns": dict(self.blocked_time_ns),
            "bits_offered": self.bits_offered,
            "bits_served": self.bits_served,
            "bits_lost": self.bits_lost,
            "energy_pj_per_bit": dict(self.energy_pj_per_bit),
        }


def _weighted_percentile(samples: list[tuple[float, float]], q: float) -> float:
    samples = sorted(s for s in samples if s[1] > 0)
    total = sum(w for _, w in samples)
    if not total:
        return math.nan
    acc = 0.0
    for value, weight in samples:
        acc += weight
        if acc >= q * total:
            return value
    return samples[-1][0]


class FabricSim:
    """Flow-level run of the reconfigurable fabric inside one :class:`Engine`.

    Demands are fluid: between consecutive dispatches each pair pushes its
    demand along its pinned path, and a link shared beyond its rate scales
    every flow on it down proportionally. Flows pinned to a freshly blocked
    beam lose their bits until the twin's reroute lands.
    """

    def __init__(
        self,
        topo: Topology,
        candidates: Sequence[Link],
        engine: Engine,
        *,
        seed: int = 0,
        steering_delay_ns: int = DEFAULT_STEERING_DELAY_NS,
        predictions: bool = False,
        lookahead_ns: int = 0,
        reconfigure: bool = True,
        blockage: BlockageDynamics | None = BlockageDynamics(),
        min_nlos_rate_bps: float = DEFAULT_MIN_NLOS_RATE_BPS,
        nlos_loss_db: float = DEFAULT_NLOS_LOSS_DB,
        models: cm.CostModels = cm.CostModels(),
        frame_bits: float = cm.DEFAULT_FRAME_BITS,
    ):
        self.topo = topo
        self.engine = engine
        self.candidates = {c.key: c for c in candidates}
        self.seed = seed
        self.steering_delay_ns = int(steering_delay_ns)
        self.predictions = predictions
        self.lookahead_ns = int(lookahead_ns)
        self.reconfigure = reconfigure
        self.blockage = blockage
        self.min_nlos_rate_bps = min_nlos_rate_bps
        self.nlos_loss_db = nlos_loss_db
        self.models = models
        self.frame_bits = frame_bits

        self.blocked: set[Key] = set()      # LoS ray physically obstructed
        self.on_nlos: set[Key] = set()      # beam steered onto a reflection
        self.drained: set[Key] = set()      # traffic moved off ahead of a blockage
        self.stuck: set[Key] = set()        # blocked, reroute not yet landed
        self.changed_at: dict[Key, int] = {k: 0 for k in self.candidates}
        self.pins: dict[Key, Path] = {}
        self.tm = TrafficMatrix()
        self.twin = TwinState()
        self.reconfig_rows: list[tuple] = []
        self.reconfigurations = 0
        self.actions: list[RerouteAction] = []
        self.divergences = 0

        self._last_t = 0
        self._offered = 0.0
        self._served = 0.0
        self._lost = 0.0
        self._lat_weighted = 0.0
        self._lat_samples: list[tuple[float, float]] = []
        self._energy: dict[str, list[float]] = {"thz": [0.0, 0.0], "optical": [0.0, 0.0]}
        self._blocked_since: dict[Key, int] = {}
        self._blocked_time: dict[Key, int] = {k: 0 for k in self.candidates}
        self._switched_cache: dict[Key, float] = {}

        for kind, handler in (
            ("reconfig-epoch", self._on_epoch),
            ("blockage-on", self._on_blockage_on),
            ("blockage-off", self._on_blockage_off),
            ("link-up", self._on_link_up),
            ("reroute", self._on_reroute),
        ):
            engine.on(kind, handler)
        engine.observers.append(self._after_dispatch)

    # -- scheduling ------------------------------------------------------

    def schedule_blockages(self, duration_ns: int) -> None:
        if self.blockage is None:
            return
        stream = RngStream(self.seed, "blockage")
        for key in sorted(self.candidates, key=_sort_key):
            t = 0.0
            while True:
                t += stream.exponential(self.blockage.mean_off_ns)
                start = int(round(t))
                if start >= duration_ns:
                    break
                t += max(1.0, stream.exponential(self.blockage.mean_on_ns))
                end = int(round(t))
                payload = {"a": key[0], "b": key[1]}
                self.engine.schedule(start, "blockage-on", payload)
                if self.predictions:
                    self.engine.schedule(max(self.engine.now, start - self.lookahead_ns), "twin-wake", payload)
                if end < duration_ns:
                    self.engine.schedule(end, "blockage-off", payload)

    def run(self, tm_sequence: Sequence[TrafficMatrix], objective: Objective, epoch_ns: int,
            duration_ns: int) -> EpochMetrics:
        if epoch_ns <= 0:
            raise ValueError("epoch_ns must be positive")
        if not tm_sequence:
            raise ValueError("need at least one traffic matrix")
        self.objective = objective
        self.tm_sequence = list(tm_sequence)
        self.duration_ns = int(duration_ns)
        self.epoch_ns = int(epoch_ns)
        n_epochs = max(1, math.ceil(self.duration_ns / self.epoch_ns))
        for k in range(n_epochs):
            self.engine.schedule(k * self.epoch_ns, "reconfig-epoch", {"epoch": k})
        self.schedule_blockages(self.duration_ns)
        self.engine.run_until(self.duration_ns)
        self._advance(self.duration_ns)
        return self.metrics()

    # -- state derivation ------------------------------------------------

    def _refresh(self, key: Key) -> None:
        link = self.topo.links[key]
        base = self.candidates[key]
        if link.state in ("inactive", "pending"):
            state = link.state
        elif key in self.blocked and key not in self.on_nlos:
            state = "blocked"
        elif key in self.drained:
            state = "blocked"
        else:
            state = "active"
        if key in self.on_nlos:
            blockage = BlockageState("nlos", self.nlos_loss_db)
            rate = base.nlos_rate_bps
        else:
            blockage, rate = base.blockage, base.rate_bps
        if (state, blockage, rate) != (link.state, link.blockage, link.rate_bps):
            self.topo.set_link(key, state=state, blockage=blockage, rate_bps=rate)
            self.changed_at[key] = self.engine.now

    def _switched(self, pair: Key) -> float:
        if pair not in self._switched_cache:
            self._switched_cache.update(switched_latencies(self.topo, [pair], self.frame_bits,
                                                           self.models.latency))
        return self._switched_cache[pair]

    def _repin(self) -> None:
        pins, fresh = {}, []
        for pair in self.tm.pairs():
            old = self.pins.get(pair)
            if old is not None and any(k in self.stuck for k in old.links):
                pins[pair] = old
            else:
                fresh.append(pair)
        pins.update(route_all(self.topo, fresh, frame_bits=self.frame_bits, params=self.models.latency))
        self.pins = {pair: pins[pair] for pair in self.tm.pairs()}

    # -- accounting ------------------------------------------------------

    def _allocation(self) -> dict[Key, float]:
        load: dict[Key, float] = {}
        for pair, path in self.pins.items():
            for k in path.links:
                load[k] = load.get(k, 0.0) + self.tm.demand[pair]
        served = {}
        for pair, path in self.pins.items():
            d = self.tm.demand[pair]
            share = 1.0
            for k in path.links:
                link = self.topo.links[k]
                cap = link.rate_bps if (link.usable and k not in self.stuck) else 0.0
                share = min(share, cap / load[k])
            served[pair] = d * share
        return served

    def _path_energy(self, path: Path) -> tuple[str, float]:
        if len(path.links) == 1 and self.topo.links[path.links[0]].medium == "thz":
            link = self.topo.links[path.links[0]]
            try:
                return "thz", cm.thz_energy_per_bit(self.models.thz, self.models.plm, link.length_m,
                                                    min(link.rate_bps, self.models.thz.ceiling_bps))
            except (cm.InfeasibleLink, ValueError):
                return "thz", math.nan
        return "optical", cm.optical_energy_per_bit(self.models.optical, path.switches)

    def _advance(self, now: int) -> None:
        dt = now - self._last_t
        if dt > 0 and self.pins:
            served = self._allocation()
            secs = dt * 1e-9
            for pair, path in self.pins.items():
                d = self.tm.demand[pair]
                self._offered += d * secs
                self._served += served[pair] * secs
                if any(k in self.stuck for k in path.links):
                    self._lost += (d - served[pair]) * secs
                self._lat_weighted += d * secs * path.latency_ns
                self._lat_samples.append((path.latency_ns, d * secs))
                medium, e = self._path_energy(path)
                if not math.isnan(e) and served[pair] > 0:
                    acc = self._energy[medium]
                    acc[0] += e * served[pair] * secs
                    acc[1] += served[pair] * secs
        self._last_t = now

    # -- handlers --------------------------------------------------------

    def _on_epoch(self, eng: Engine, ev: Event) -> None:
        self._advance(eng.now)
        k = ev.payload["epoch"]
        self.tm = self.tm_sequence[min(k, len(self.tm_sequence) - 1)]
        if k == 0 or self.reconfigure:
            self._reconfigure(k)
        self._repin()
        end = min(eng.now + self.epoch_ns, self.duration_ns)
        for pair in self.tm.pairs():
            flow = {"src": pair[0], "dst": pair[1]}
            eng.schedule(eng.now, "flow-start", {**flow, "bps": self.tm.demand[pair]})
            eng.schedule(end, "flow-end", flow)

    def _reconfigure(self, epoch: int) -> None:
        current = [k for k in self.candidates if self.topo.links[k].state != "inactive"]
        cands = []
        for key in sorted(self.candidates, key=_sort_key):
            base = self.candidates[key]
            rate = 0.0 if key in self.blocked else base.rate_bps
            cands.append(replace(base, rate_bps=rate, state="inactive"))
        caps = {r: self.topo.racks[r].radio_count for r in self.topo.racks}
        switched = None
        if self.objective.kind != "bandwidth":
            switched = {link_key(*p): self._switched(link_key(*p)) for p in self.tm.pairs()}
        plan = select_links(cands, self.tm, caps, self.objective, switched_latency_ns=switched,
                            current=current, epoch_id=epoch, steering_delay_ns=self.steering_delay_ns)
        for key in plan.deactivate:
            self.stuck.discard(key)
            self.drained.discard(key)
            self.on_nlos.discard(key)
        apply_plan(self.topo, plan, self.engine)
        for key in plan.activate + plan.deactivate:
            self.changed_at[key] = self.engine.now
        for key in plan.activate:
            self._refresh(key)
        if not plan.empty:
            self.reconfigurations += 1
        fmt = lambda keys: "|".join(f"{a}-{b}" for a, b in keys)
        self.reconfig_rows.append((epoch, self.engine.now, fmt(plan.activate), fmt(plan.deactivate),
                                   self.objective.kind, plan.matched_weight))

    def _on_link_up(self, eng: Engine, ev: Event) -> None:
        self._advance(eng.now)
        key = (ev.payload["a"], ev.payload["b"])
        if self.topo.links[key].state != "pending":
            return
        self.topo.set_link(key, state="active")
        self.changed_at[key] = eng.now
        self._refresh(key)
        self._repin()

    def _on_blockage_on(self, eng: Engine, ev: Event) -> None:
        self._advance(eng.now)
        key = (ev.payload["a"], ev.payload["b"])
        self.blocked.add(key)
        self._blocked_since[key] = eng.now
        if key not in self.on_nlos and key not in self.drained and self.topo.links[key].state != "inactive":
            if any(key in p.links for p in self.pins.values()):
                self.stuck.add(key)
        self._refresh(key)

    def _on_blockage_off(self, eng: Engine, ev: Event) -> None:
        self._advance(eng.now)
        key = (ev.payload["a"], ev.payload["b"])
        self.blocked.discard(key)
        self._blocked_time[key] += eng.now - self._blocked_since.pop(key, eng.now)
        self.on_nlos.discard(key)
        self.drained.discard(key)
        self.stuck.discard(key)
        self._refresh(key)
        self._repin()

    def _on_reroute(self, eng: Engine, ev: Event) -> None:
        self._advance(eng.now)
        key = (ev.payload["a"], ev.payload["b"])
        if self.topo.links[key].state == "inactive":
            return
        if ev.payload["via"] == "nlos":
            self.on_nlos.add(key)
        elif ev.payload.get("preemptive") and key not in self.blocked:
            self.drained.add(key)
        self.stuck.discard(key)
        self._refresh(key)
        self._repin()

    # -- twin ------------------------------------------------------------

    def snapshot(self) -> FabricSnapshot:
        now = self.engine.now
        util: dict[Key, float] = {}
        for pair, path in self.pins.items():
            for k in path.links:
                if k in self.candidates:
                    util[k] = util.get(k, 0.0) + self.tm.demand[pair]
        links = {}
        for key in sorted(self.candidates, key=_sort_key):
            link = self.topo.links[key]
            blockage = "blocked" if link.state == "blocked" else link.blockage.state
            rate = link.rate_bps
            links[key] = TwinLink(
                state=link.state,
                blockage=blockage,
                snr_db=link.snr_db,
                rate_bps=rate,
                nlos_rate_bps=self.candidates[key].nlos_rate_bps,
                utilization=util.get(key, 0.0) / rate if rate > 0 else 0.0,
                last_update_ns=self.changed_at[key],
            )
        scheduled = tuple(
            (ev.fire_at, (ev.payload["a"], ev.payload["b"]))
            for ev in self.engine.pending("blockage-on")
        )
        return FabricSnapshot(now, links, scheduled)

    def _after_dispatch(self, eng: Engine, ev: Event) -> None:
        snap = self.snapshot()
        self.twin, actions = twin_step(self.twin, snap, predictions=self.predictions,
                                       lookahead_ns=self.lookahead_ns,
                                       min_nlos_rate_bps=self.min_nlos_rate_bps)
        if twin_diff(self.twin, snap):
            self.divergences += 1
        for act in actions:
            self.actions.append(act)
            eng.schedule(eng.now + self.steering_delay_ns, "reroute",
                         {"a": act.key[0], "b": act.key[1], "via": act.via,
                          "preemptive": int(act.preemptive)})

    # -- results ---------------------------------------------------------

    def metrics(self) -> EpochMetrics:
        blocked = dict(self._blocked_time)
        for key, since in self._blocked_since.items():
            blocked[key] += self._last_t - since
        energy = {m: (acc[0] / acc[1] * 1e12 if acc[1] else math.nan) for m, acc in self._energy.items()}
        return EpochMetrics(
            served_fraction=self._served / self._offered if self._offered else 1.0,
            mean_latency_ns=self._lat_weighted / self._offered if self._offered else math.nan,
            p50_latency_ns=_weighted_percentile(self._lat_samples, 0.5),
            p99_latency_ns=_weighted_percentile(self._lat_samples, 0.99),
            reconfigurations=self.reconfigurations,
            blocked_time_ns={f"{a}-{b}": t for (a, b), t in sorted(blocked.items(), key=lambda i: _sort_key(i[0]))
                             if t > 0},
            bits_offered=self._offered,
            bits_served=self._served,
            bits_lost=self._lost,
            energy_pj_per_bit=energy,
        )

    def reconfig_log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECONFIG_LOG_HEADER)
        for epoch, t, act, deact, obj, weight in self.reconfig_rows:
            w.writerow((epoch, t, act, deact, obj, repr(float(weight))))
        return buf.getvalue()


def run_epoching(sim: FabricSim, tm_sequence: Sequence[TrafficMatrix], objective: Objective,
                 epoch_ns: int, duration_ns: int | None = None) -> EpochMetrics:
    """Re-select links at every epoch boundary and return run metrics."""
    if duration_ns is None:
        duration_ns = epoch_ns * len(tm_sequence)
    return sim.run(tm_sequence, objective, epoch_ns, duration_ns)
