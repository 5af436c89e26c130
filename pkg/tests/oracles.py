"""Independent reference solvers used only by the test-suite."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp


def dp_b_matching(weights: dict, caps: dict) -> float:
    """Exact max-weight b-matching by DP over every used-degree vector.

    State ``s`` encodes the radios already used at each node in mixed radix
    (base cap+1), so the table covers all prod(cap+1) degree profiles.
    """
    nodes = sorted(caps)
    idx = {n: i for i, n in enumerate(nodes)}
    radix = [caps[n] + 1 for n in nodes]
    place = np.cumprod([1] + radix[:-1])
    size = int(np.prod(radix))
    states = np.arange(size)
    digits = [(states // place[i]) % radix[i] for i in range(len(nodes))]
    best = np.full(size, -np.inf)
    best[0] = 0.0
    for (a, b), w in sorted(weights.items()):
        if w <= 0:
            continue
        i, j = idx[a], idx[b]
        ok = (digits[i] < caps[a]) & (digits[j] < caps[b]) & np.isfinite(best)
        src = states[ok]
        dst = src + place[i] + place[j]
        cand = best[src] + w
        upd = best.copy()
        upd[dst] = np.maximum(best[dst], cand)
        best = upd
    return float(best[np.isfinite(best)].max())


def brute_force_b_matching(weights: dict, caps: dict) -> float:
    """Enumerate every edge subset; only for tiny instances."""
    edges = [k for k, w in weights.items() if w > 0]
    best = 0.0
    for r in range(len(edges) + 1):
        for subset in itertools.combinations(edges, r):
            deg: dict = {}
            for a, b in subset:
                deg[a] = deg.get(a, 0) + 1
                deg[b] = deg.get(b, 0) + 1
            if all(deg[n] <= caps.get(n, 0) for n in deg):
                best = max(best, sum(weights[e] for e in subset))
    return best


def milp_b_matching(weights: dict, caps: dict) -> float:
    edges = [k for k, w in weights.items() if w > 0]
    if not edges:
        return 0.0
    nodes = sorted(caps)
    A = np.zeros((len(nodes), len(edges)))
    for j, (a, b) in enumerate(edges):
        A[nodes.index(a), j] = 1
        A[nodes.index(b), j] = 1
    c = -np.array([weights[e] for e in edges])
    res = milp(c, constraints=LinearConstraint(A, 0, [caps[n] for n in nodes]),
               integrality=np.ones(len(edges)), bounds=Bounds(0, 1))
    assert res.success
    return float(-res.fun)
