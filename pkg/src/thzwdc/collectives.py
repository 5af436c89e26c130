"""Ring AllReduce and tree broadcast: closed-form alpha-beta costs and an
event-level simulation over a :class:`~thzwdc.fabric.Topology`."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from . import costmodels as cm
from .fabric import Link, Path, Topology, TopologyError, link_key, path_latency, route
from .simcore import Engine, Event

OPS = ("allreduce-ring", "broadcast-tree")


class CollectiveError(ValueError):
    pass


@dataclass(frozen=True)
class CollectiveSpec:
    op: str
    node_count: int
    message_bits: float

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown collective {self.op!r}")
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if self.message_bits <= 0:
            raise ValueError("message_bits must be positive")


@dataclass(frozen=True)
class AlphaBetaCost:
    alpha_ns: float
    beta_ns_per_bit: float

    def __post_init__(self):
        if self.alpha_ns < 0 or self.beta_ns_per_bit <= 0:
            raise ValueError("need alpha >= 0 and beta > 0")

    @classmethod
    def from_rate(cls, alpha_ns: float, rate_bps: float) -> "AlphaBetaCost":
        return cls(alpha_ns, 1e9 / rate_bps)

    @classmethod
    def from_link(cls, medium: str, distance: float, rate_bps: float, hops: int = 0,
                  params: cm.LatencyParams = cm.DEFAULT_LATENCY) -> "AlphaBetaCost":
        """Per-message latency is the link budget of an empty frame."""
        alpha = cm.link_latency(medium, distance, rate_bps, 0, hops, params).total_ns
        return cls.from_rate(alpha, rate_bps)


def allreduce_ring_time(spec: CollectiveSpec, cost: AlphaBetaCost) -> float:
    n = spec.node_count
    return 2 * (n - 1) * (cost.alpha_ns + spec.message_bits / n * cost.beta_ns_per_bit)


def broadcast_steps(node_count: int, fanout: int) -> int:
    """Depth of the complete ``fanout``-ary tree spanning ``node_count`` nodes."""
    if fanout < 1:
        raise ValueError("fanout must be at least 1")
    if fanout == 1:
        return node_count - 1
    depth, reached, level = 0, 1, 1
    while reached < node_count:
        level *= fanout
        reached += level
        depth += 1
    return depth


def broadcast_tree_time(spec: CollectiveSpec, cost: AlphaBetaCost, fanout: int) -> float:
    steps = broadcast_steps(spec.node_count, fanout)
    return steps * (cost.alpha_ns + spec.message_bits * cost.beta_ns_per_bit)


@dataclass
class StepTrace:
    step: int
    start_ns: float
    end_ns: float
    sends: list[tuple[str, str, float]] = field(default_factory=list)  # (src, dst, ns)


@dataclass
class CollectiveResult:
    spec: CollectiveSpec
    completion_ns: float
    steps: list[StepTrace]

    def report(self, topology: str, analytic_ns: float) -> dict:
        return {
            "op": self.spec.op,
            "N": self.spec.node_count,
            "M_bits": self.spec.message_bits,
            "topology": topology,
            "analytic_ns": analytic_ns,
            "simulated_ns": self.completion_ns,
            "steps": [asdict(s) for s in self.steps],
        }


def _backbone(topo: Topology) -> Topology:
    t = topo.copy()
    for key, link in topo.links.items():
        if link.medium == "thz":
            t.links[key] = replace(link, state="inactive")
    return t


def _send_path(topo: Topology, src: str, dst: str, medium: str) -> Path:
    if medium == "thz":
        link = topo.links.get(link_key(src, dst))
        if link is None or link.medium != "thz" or not link.usable:
            raise CollectiveError(f"no active THz link {src}-{dst}")
        return Path((src, dst), (link.key,), path_latency(topo, (src, dst), 0))
    try:
        return route(topo, src, dst, frame_bits=0)
    except TopologyError as exc:
        raise CollectiveError(str(exc)) from exc


def _step_sends(spec: CollectiveSpec, nodes: Sequence[str], step: int, fanout: int) -> list[tuple[str, str, float]]:
    n = len(nodes)
    if spec.op == "allreduce-ring":
        chunk = spec.message_bits / n
        return [(nodes[i], nodes[(i + 1) % n], chunk) for i in range(n)]
    if fanout == 1:
        return [(nodes[step], nodes[step + 1], spec.message_bits)] if step + 1 < n else []
    # heap layout: node i has children i*f+1 .. i*f+f; parents at depth ``step`` send
    first = (fanout ** step - 1) // (fanout - 1)
    last = (fanout ** (step + 1) - 1) // (fanout - 1)
    sends = []
    for parent in range(first, min(last, n)):
        for c in range(parent * fanout + 1, parent * fanout + fanout + 1):
            if c < n:
                sends.append((nodes[parent], nodes[c], spec.message_bits))
    return sends


def simulate_collective(
    spec: CollectiveSpec,
    topo: Topology,
    engine: Engine,
    *,
    nodes: Sequence[str] | None = None,
    medium: str = "auto",
    fanout: int = 2,
) -> CollectiveResult:
    """Run the collective step by step on ``engine``.

    Every send becomes a flow lasting its path latency (empty frame, so
    switch terms appear exactly once per traversed switch) plus the bits over
    its share of the bottleneck rate. Links are full duplex: sends share a
    link's rate only when they cross it in the same direction. A step ends
    when its slowest send ends.

    ``medium`` selects direct THz links (``"thz"``), the switched backbone
    (``"optical"``) or the latency-shortest usable path (``"auto"``).
    """
    nodes = list(nodes or topo.rack_ids()[: spec.node_count])
    if len(nodes) != spec.node_count:
        raise CollectiveError(f"need {spec.node_count} nodes, topology offers {len(nodes)}")
    net = _backbone(topo) if medium == "optical" else topo
    route_medium = "thz" if medium == "thz" else "auto"
    if spec.op == "allreduce-ring":
        n_steps = 2 * (spec.node_count - 1)
    else:
        n_steps = broadcast_steps(spec.node_count, fanout)

    paths: dict[tuple[str, str], Path] = {}
    steps: list[StepTrace] = []
    clock = {"t": 0.0, "outstanding": 0}

    def path_for(src: str, dst: str) -> Path:
        if (src, dst) not in paths:
            paths[(src, dst)] = _send_path(net, src, dst, route_medium)
        return paths[(src, dst)]

    def on_step(eng: Engine, ev: Event) -> None:
        k = ev.payload["step"]
        sends = _step_sends(spec, nodes, k, fanout)
        usage: dict[tuple[str, str], int] = {}
        for src, dst, _ in sends:
            p = path_for(src, dst)
            for u, v in zip(p.nodes, p.nodes[1:]):
                usage[(u, v)] = usage.get((u, v), 0) + 1
        trace = StepTrace(k, clock["t"], clock["t"])
        for src, dst, bits in sends:
            p = path_for(src, dst)
            share = min(net.links[link_key(u, v)].rate_bps / usage[(u, v)]
                        for u, v in zip(p.nodes, p.nodes[1:]))
            dur = p.latency_ns + bits / share * 1e9
            trace.sends.append((src, dst, dur))
            trace.end_ns = max(trace.end_ns, clock["t"] + dur)
            eng.schedule(int(round(clock["t"] + dur)), "flow-end",
                         {"step": k, "src": src, "dst": dst})
            eng.schedule(eng.now, "flow-start", {"step": k, "src": src, "dst": dst, "bits": bits})
        steps.append(trace)
        clock["outstanding"] = len(sends)
        if not sends:
            finish_step(eng)

    def finish_step(eng: Engine) -> None:
        trace = steps[-1]
        clock["t"] = trace.end_ns
        if trace.step + 1 < n_steps:
            eng.schedule(max(eng.now, int(round(clock["t"]))), "collective-step", {"step": trace.step + 1})

    def on_flow_end(eng: Engine, ev: Event) -> None:
        if "step" not in ev.payload:
            return
        clock["outstanding"] -= 1
        if clock["outstanding"] == 0:
            finish_step(eng)

    engine.on("collective-step", on_step)
    engine.on("flow-end", on_flow_end)
    engine.schedule(engine.now, "collective-step", {"step": 0})
    while engine.peek_time() is not None:
        engine.step()
    return CollectiveResult(spec, clock["t"], steps)


def ring_positions(n: int, spacing: float) -> list[tuple[float, float]]:
    """Rack coordinates on a circle so that consecutive racks are ``spacing`` apart."""
    if n == 2:
        return [(0.0, 0.0), (spacing, 0.0)]
    radius = spacing / (2.0 * math.sin(math.pi / n))
    return [(round(radius * math.cos(2 * math.pi * i / n), 12), round(radius * math.sin(2 * math.pi * i / n), 12))
            for i in range(n)]


def activate_ring(topo: Topology, nodes: Sequence[str], rate_bps: float) -> None:
    """Bring up direct THz links between ring neighbours at a uniform rate."""
    n = len(nodes)
    pairs = {link_key(nodes[i], nodes[(i + 1) % n]) for i in range(n)}
    for a, b in sorted(pairs):
        topo.add_link(Link(a, b, "thz", rate_bps, "active", topo.distance(a, b)))
    topo.check_invariants(require_backbone=bool(topo.switches))


def report_json(result: CollectiveResult, topology: str, analytic_ns: float) -> str:
    return json.dumps(result.report(topology, analytic_ns), indent=2)
