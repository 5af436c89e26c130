"""Data-center topology: racks, optical fat-tree tiers, THz overlay, routing."""

from __future__ import annotations

import csv
import functools
import heapq
import io
import itertools
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Iterable, Mapping

from . import costmodels as cm
from .channel import (
    DEFAULT_NLOS_LOSS_DB,
    LinkBudget,
    PathLossModel,
    BlockageState,
    achievable_rate,
    path_loss,
    sample_blockage,
)
from .simcore import RngStream

TIERS = ("tor", "aggregation", "core")
LINK_STATES = ("active", "inactive", "blocked", "pending")
MEDIA = ("thz", "optical", "copper")

DEFAULT_PITCH_M = 1.2
DEFAULT_MAX_RANGE_M = 100.0
# fiber run per tier boundary: rack-ToR, ToR-aggregation, aggregation-core
DEFAULT_SEGMENT_M = {"tor": 2.0, "aggregation": 10.0, "core": 30.0}

_NODE_RE = re.compile(r"^([a-z]+)(\d+)$")


class TopologyError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


@functools.lru_cache(maxsize=None)
def node_key(node: str) -> tuple[str, int]:
    """Natural sort key so that ``s2`` orders before ``s10``."""
    m = _NODE_RE.match(node)
    if not m:
        return (node, -1)
    return (m.group(1), int(m.group(2)))


def link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if node_key(a) <= node_key(b) else (b, a)


@dataclass(frozen=True)
class Rack:
    id: str
    x: float
    y: float
    radio_count: int = 0

    def __post_init__(self):
        if self.radio_count < 0:
            raise ValueError("radio_count must be non-negative")


@dataclass(frozen=True)
class Switch:
    id: str
    tier: str

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    medium: str
    rate_bps: float
    state: str = "active"
    length_m: float = 0.0
    blockage: BlockageState | None = None
    snr_db: float = 0.0
    # fallback rate when the LoS ray is lost (0: no usable reflection)
    nlos_rate_bps: float = 0.0

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on {self.a}")
        if self.medium not in MEDIA:
            raise ValueError(f"unknown medium {self.medium!r}")
        if self.state not in LINK_STATES:
            raise ValueError(f"unknown link state {self.state!r}")
        if self.state == "active" and self.rate_bps <= 0:
            raise TopologyError(f"active link {self.key} needs a positive rate")

    @property
    def key(self) -> tuple[str, str]:
        return link_key(self.a, self.b)

    @property
    def usable(self) -> bool:
        return self.state == "active"

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


def grid_positions(count: int, pitch: float = DEFAULT_PITCH_M, per_row: int = 8) -> list[tuple[float, float]]:
    return [((i % per_row) * pitch, (i // per_row) * pitch) for i in range(count)]


class Topology:
    """Mutable fabric. Only the orchestrator mutates it, between dispatches."""

    def __init__(self, racks: Iterable[Rack] = (), switches: Iterable[Switch] = (),
                 links: Iterable[Link] = ()):
        self.racks: dict[str, Rack] = {}
        self.switches: dict[str, Switch] = {}
        self.links: dict[tuple[str, str], Link] = {}
        for r in racks:
            self.add_rack(r)
        for s in switches:
            self.switches[s.id] = s
        for link in links:
            self.add_link(link)

    def add_rack(self, rack: Rack) -> None:
        if any((r.x, r.y) == (rack.x, rack.y) for r in self.racks.values()):
            raise TopologyError(f"duplicate rack position for {rack.id}")
        self.racks[rack.id] = rack

    def add_link(self, link: Link) -> None:
        for n in (link.a, link.b):
            if n not in self.racks and n not in self.switches:
                raise TopologyError(f"link endpoint {n} unknown")
        if link.medium == "thz" and not (link.a in self.racks and link.b in self.racks):
            raise TopologyError("THz links must join two racks")
        self.links[link.key] = link

    def set_link(self, key: tuple[str, str], **changes) -> Link:
        link = replace(self.links[key], **changes)
        self.links[key] = link
        return link

    def copy(self) -> "Topology":
        t = Topology()
        t.racks = dict(self.racks)
        t.switches = dict(self.switches)
        t.links = dict(self.links)
        return t

    def rack_ids(self) -> list[str]:
        return sorted(self.racks, key=node_key)

    def thz_links(self, state: str | None = None) -> list[Link]:
        out = [l for l in self.links.values() if l.medium == "thz"]
        if state is not None:
            out = [l for l in out if l.state == state]
        return sorted(out, key=lambda l: (node_key(l.key[0]), node_key(l.key[1])))

    def radio_degree(self, rack: str) -> int:
        """Radios committed on ``rack``: active, pending-activation or blocked links."""
        return sum(
            1 for l in self.links.values()
            if l.medium == "thz" and l.state != "inactive" and rack in (l.a, l.b)
        )

    def distance(self, a: str, b: str) -> float:
        ra, rb = self.racks[a], self.racks[b]
        return math.hypot(ra.x - rb.x, ra.y - rb.y)

    def adjacency(self, usable_only: bool = True) -> dict[str, list[Link]]:
        adj: dict[str, list[Link]] = {n: [] for n in itertools.chain(self.racks, self.switches)}
        for link in self.links.values():
            if usable_only and not link.usable:
                continue
            adj[link.a].append(link)
            adj[link.b].append(link)
        return adj

    def backbone_connected(self) -> bool:
        """Racks stay mutually reachable using only non-THz links."""
        racks = self.rack_ids()
        if len(racks) < 2:
            return True
        adj: dict[str, list[str]] = {n: [] for n in itertools.chain(self.racks, self.switches)}
        for l in self.links.values():
            if l.medium != "thz":
                adj[l.a].append(l.b)
                adj[l.b].append(l.a)
        seen = {racks[0]}
        stack = [racks[0]]
        while stack:
            n = stack.pop()
            for m in adj[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return all(r in seen for r in racks)

    def check_invariants(self, require_backbone: bool = True) -> None:
        for rack in self.racks.values():
            deg = self.radio_degree(rack.id)
            if deg > rack.radio_count:
                raise InvariantViolation(
                    f"rack {rack.id} uses {deg} radios but has {rack.radio_count}")
        if require_backbone and not self.backbone_connected():
            raise InvariantViolation("optical backbone is disconnected")

    # --- JSON interchange -------------------------------------------------

    def to_dict(self) -> dict:
        links = sorted(self.links.values(), key=lambda l: (node_key(l.key[0]), node_key(l.key[1])))
        return {
            "racks": [{"id": r.id, "x": r.x, "y": r.y, "radios": r.radio_count}
                      for r in sorted(self.racks.values(), key=lambda r: node_key(r.id))],
            "switches": [{"id": s.id, "tier": s.tier}
                         for s in sorted(self.switches.values(), key=lambda s: node_key(s.id))],
            "links": [{"a": l.a, "b": l.b, "medium": l.medium, "rate_bps": l.rate_bps,
                       "state": l.state, "length_m": l.length_m} for l in links],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Topology":
        t = cls(
            racks=[Rack(r["id"], float(r["x"]), float(r["y"]), int(r.get("radios", 0)))
                   for r in data.get("racks", [])],
            switches=[Switch(s["id"], s["tier"]) for s in data.get("switches", [])],
        )
        for l in data.get("links", []):
            t.add_link(Link(l["a"], l["b"], l["medium"], float(l["rate_bps"]),
                            l.get("state", "active"), float(l.get("length_m", 0.0))))
        return t

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))


def build_fat_tree(
    rack_count: int,
    tiers: int,
    link_rate_bps: float,
    *,
    racks_per_tor: int = 4,
    tors_per_pod: int = 2,
    spine_width: int = 2,
    radio_count: int = 2,
    positions: list[tuple[float, float]] | None = None,
    segment_m: Mapping[str, float] = DEFAULT_SEGMENT_M,
) -> Topology:
    """Static optical fabric with ``tiers`` switch layers above the racks.

    One tier is a single ToR. Two tiers group racks under ToRs that all
    connect to ``spine_width`` aggregation switches. Three tiers group ToRs
    into pods with their own aggregation switches, all of which connect to
    ``spine_width`` core switches. Redundant uplinks give equal-cost paths,
    which routing breaks by lowest switch id.
    """
    if rack_count < 2:
        raise ValueError("rack_count must be at least 2")
    if tiers not in (1, 2, 3):
        raise ValueError(f"unsupported tier count {tiers}")
    positions = positions or grid_positions(rack_count)
    topo = Topology(Rack(f"r{i}", float(x), float(y), radio_count) for i, (x, y) in enumerate(positions))
    counter = itertools.count()

    def new_switch(tier: str) -> str:
        sid = f"s{next(counter)}"
        topo.switches[sid] = Switch(sid, tier)
        return sid

    def fiber(a: str, b: str, tier: str) -> None:
        topo.add_link(Link(a, b, "optical", link_rate_bps, "active", segment_m[tier]))

    racks = topo.rack_ids()
    if tiers == 1:
        tor = new_switch("tor")
        for r in racks:
            fiber(r, tor, "tor")
        return topo

    tor_groups = [racks[i:i + racks_per_tor] for i in range(0, len(racks), racks_per_tor)]
    tors = []
    for group in tor_groups:
        tor = new_switch("tor")
        tors.append(tor)
        for r in group:
            fiber(r, tor, "tor")

    if tiers == 2:
        spines = [new_switch("aggregation") for _ in range(spine_width)]
        for tor in tors:
            for agg in spines:
                fiber(tor, agg, "aggregation")
        return topo

    pods = [tors[i:i + tors_per_pod] for i in range(0, len(tors), tors_per_pod)]
    aggs_by_pod = []
    for pod in pods:
        aggs = [new_switch("aggregation") for _ in range(spine_width)]
        aggs_by_pod.append(aggs)
        for tor in pod:
            for agg in aggs:
                fiber(tor, agg, "aggregation")
    cores = [new_switch("core") for _ in range(spine_width)]
    for aggs in aggs_by_pod:
        for agg in aggs:
            for core in cores:
                fiber(agg, core, "core")
    return topo


def build_thz_overlay(
    topo: Topology,
    radio_count_per_rack: int,
    plm: PathLossModel,
    p_los: float,
    *,
    stream: RngStream,
    template: LinkBudget = LinkBudget(),
    nlos_loss_db: float = DEFAULT_NLOS_LOSS_DB,
    max_range_m: float = DEFAULT_MAX_RANGE_M,
    shadow_stream: RngStream | None = None,
) -> list[Link]:
    """Add every in-range rack pair as an inactive THz candidate.

    Blockage state and shadowing are drawn once per pair, in sorted pair
    order, and stay frozen. Returns the candidates in that order.
    """
    for rid, rack in list(topo.racks.items()):
        topo.racks[rid] = replace(rack, radio_count=radio_count_per_rack)
    candidates = []
    for a, b in itertools.combinations(topo.rack_ids(), 2):
        d = topo.distance(a, b)
        if d > max_range_m:
            continue
        blockage = sample_blockage(p_los, nlos_loss_db, stream)
        shadow = shadow_stream.normal() if (shadow_stream is not None and plm.shadow_sigma_db > 0) else None
        pl = path_loss(plm, max(d, plm.d0), shadow)
        budget = template.with_path_loss(pl + blockage.extra_loss_db)
        rate = achievable_rate(budget)
        if rate <= 0:
            continue
        nlos_rate = 0.0
        if blockage.state == "los":
            nlos_rate = achievable_rate(template.with_path_loss(pl + nlos_loss_db))
        link = Link(a, b, "thz", rate, "inactive", d, blockage, budget.snr_db, nlos_rate)
        topo.add_link(link)
        candidates.append(link)
    return candidates


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    links: tuple[tuple[str, str], ...]
    latency: cm.LatencyBudget

    @property
    def switches(self) -> int:
        return self.latency.hops

    @property
    def latency_ns(self) -> float:
        return self.latency.total_ns


def segment_latency(
    link: Link,
    into_switch: bool,
    frame_bits: float = cm.DEFAULT_FRAME_BITS,
    params: cm.LatencyParams = cm.DEFAULT_LATENCY,
) -> cm.LatencyBudget:
    """Latency contribution of one traversed link.

    Entering a switch adds that switch's forwarding term to the segment.
    """
    if link.medium == "thz":
        return cm.link_latency("thz", link.length_m, link.rate_bps, frame_bits, 0, params)
    budget = cm.link_latency(link.medium, link.length_m, link.rate_bps, frame_bits, 0, params)
    if into_switch:
        budget = replace(budget, switch_ns=(params.per_switch_ns,))
    return budget


def path_latency(topo: Topology, nodes: tuple[str, ...], frame_bits: float = cm.DEFAULT_FRAME_BITS,
                 params: cm.LatencyParams = cm.DEFAULT_LATENCY) -> cm.LatencyBudget:
    parts = []
    for u, v in zip(nodes, nodes[1:]):
        parts.append(segment_latency(topo.links[link_key(u, v)], v in topo.switches, frame_bits, params))
    return reduce(lambda x, y: x + y, parts)


def _search(topo: Topology, src: str, targets: set[str], metric: str, frame_bits: float,
            params: cm.LatencyParams) -> dict[str, tuple[str, ...]]:
    """Lexicographic (cost, node order) Dijkstra from ``src``; racks other than
    ``src`` are leaves, so a settled label never depends on the target set."""
    if metric not in ("latency", "hops"):
        raise ValueError(f"unknown metric {metric!r}")
    adj = topo.adjacency()
    heap = [(0.0, (node_key(src),), (src,))]
    done: dict[str, tuple[str, ...]] = {}
    remaining = set(targets)
    steps: dict[tuple[tuple[str, str], bool], float] = {}
    while heap and remaining:
        cost, order, nodes = heapq.heappop(heap)
        u = nodes[-1]
        if u in done:
            continue
        done[u] = nodes
        remaining.discard(u)
        if u != src and u in topo.racks:
            continue
        for link in adj[u]:
            v = link.other(u)
            if v in done:
                continue
            into_switch = v in topo.switches
            if metric == "latency":
                memo = (link.key, into_switch)
                if memo not in steps:
                    steps[memo] = segment_latency(link, into_switch, frame_bits, params).total_ns
                step = steps[memo]
            else:
                step = 1.0 if into_switch else 0.0
            heapq.heappush(heap, (cost + step, order + (node_key(v),), nodes + (v,)))
    return {t: done[t] for t in targets if t in done}


def _as_path(topo: Topology, nodes: tuple[str, ...], frame_bits: float, params: cm.LatencyParams) -> Path:
    return Path(nodes, tuple(link_key(a, b) for a, b in zip(nodes, nodes[1:])),
                path_latency(topo, nodes, frame_bits, params))


def route(
    topo: Topology,
    src: str,
    dst: str,
    metric: str = "latency",
    frame_bits: float = cm.DEFAULT_FRAME_BITS,
    params: cm.LatencyParams = cm.DEFAULT_LATENCY,
) -> Path:
    """Shortest usable path; racks other than ``src``/``dst`` never relay.

    Equal-cost candidates are separated by the natural order of their node
    sequences, so the path through the lowest switch id wins.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    found = _search(topo, src, {dst}, metric, frame_bits, params)
    if dst not in found:
        raise TopologyError(f"no usable path from {src} to {dst}")
    return _as_path(topo, found[dst], frame_bits, params)


def route_all(
    topo: Topology,
    pairs: Iterable[tuple[str, str]],
    metric: str = "latency",
    frame_bits: float = cm.DEFAULT_FRAME_BITS,
    params: cm.LatencyParams = cm.DEFAULT_LATENCY,
) -> dict[tuple[str, str], Path]:
    """:func:`route` for many pairs, sharing one search per source."""
    by_src: dict[str, set[str]] = {}
    for src, dst in pairs:
        if src == dst:
            raise ValueError("src and dst must differ")
        by_src.setdefault(src, set()).add(dst)
    out = {}
    for src in sorted(by_src, key=node_key):
        found = _search(topo, src, by_src[src], metric, frame_bits, params)
        for dst in sorted(by_src[src], key=node_key):
            if dst not in found:
                raise TopologyError(f"no usable path from {src} to {dst}")
            out[(src, dst)] = _as_path(topo, found[dst], frame_bits, params)
    return out


@dataclass
class TrafficMatrix:
    demand: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for (s, d), bps in self.demand.items():
            if s == d and bps:
                raise ValueError(f"diagonal demand {s}->{d} must be zero")
            if bps < 0:
                raise ValueError(f"negative demand {s}->{d}")
        self.demand = {k: float(v) for k, v in self.demand.items() if k[0] != k[1] and v > 0}

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(self.demand, key=lambda p: (node_key(p[0]), node_key(p[1])))

    def undirected(self) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = {}
        for (s, d), bps in self.demand.items():
            k = link_key(s, d)
            out[k] = out.get(k, 0.0) + bps
        return out

    def total(self) -> float:
        return sum(self.demand.values())

    def scaled(self, factor: float) -> "TrafficMatrix":
        return TrafficMatrix({k: v * factor for k, v in self.demand.items()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("src", "dst", "bps"))
        for s, d in self.pairs():
            w.writerow((s, d, repr(self.demand[(s, d)])))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrafficMatrix":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None:
            return cls()
        if [h.strip() for h in header] != ["src", "dst", "bps"]:
            raise ValueError("traffic matrix header must be src,dst,bps")
        demand = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, d, bps = row
                demand[(s.strip(), d.strip())] = demand.get((s.strip(), d.strip()), 0.0) + float(bps)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed traffic row {row!r}") from exc
        return cls(demand)


@dataclass
class LoadReport:
    load_bps: dict[tuple[str, str], float]
    utilization: dict[tuple[str, str], float]
    paths: dict[tuple[str, str], Path]

    @property
    def oversubscribed(self) -> list[tuple[str, str]]:
        return [k for k, u in self.utilization.items() if u > 1.0]


def apply_traffic(topo: Topology, tm: TrafficMatrix, metric: str = "latency",
                  frame_bits: float = cm.DEFAULT_FRAME_BITS) -> LoadReport:
    """Route each demand unsplit and accumulate load; links are shared both ways."""
    load = {k: 0.0 for k, l in topo.links.items() if l.usable}
    paths = {}
    for pair in tm.pairs():
        p = route(topo, *pair, metric=metric, frame_bits=frame_bits)
        paths[pair] = p
        for k in p.links:
            load[k] += tm.demand[pair]
    util = {k: load[k] / topo.links[k].rate_bps for k in load}
    return LoadReport(load, util, paths)
