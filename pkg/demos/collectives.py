"""Ring AllReduce on a direct THz ring against the same ring embedded in a
three-tier optical fat tree.

    python demos/collectives.py
"""

from thzwdc.collectives import (
    AlphaBetaCost,
    CollectiveSpec,
    activate_ring,
    allreduce_ring_time,
    ring_positions,
    simulate_collective,
)
from thzwdc.fabric import Rack, Topology, build_fat_tree
from thzwdc.simcore import Engine

bits, rate, spacing = 8e6, 400e9, 10.0
print(f"AllReduce of {bits / 1e6:.0f} Mbit per node at {rate / 1e9:.0f} Gbps links\n")
print(f"{'N':>3}{'THz analytic':>15}{'THz simulated':>15}{'fat tree':>12}")
for n in (2, 4, 8, 16):
    spec = CollectiveSpec("allreduce-ring", n, bits)
    ring = Topology(Rack(f"r{i}", x, y, 2) for i, (x, y) in enumerate(ring_positions(n, spacing)))
    activate_ring(ring, ring.rack_ids(), rate)
    thz = simulate_collective(spec, ring, Engine(), medium="thz").completion_ns
    analytic = allreduce_ring_time(spec, AlphaBetaCost.from_link("thz", spacing, rate))
    tree = build_fat_tree(n, 3, rate)
    opt = simulate_collective(spec, tree, Engine(), medium="optical").completion_ns
    print(f"{n:>3}{analytic / 1e3:13.2f}us{thz / 1e3:13.2f}us{opt / 1e3:10.2f}us")
