"""Where a THz hop pays off: energy per bit and one-frame latency against
optical and copper, over distance and over rate.

    python demos/energy_latency.py
"""

import numpy as np

from thzwdc import costmodels as cm
from thzwdc.channel import LinkBudget, achievable_rate, free_space_path_loss

models = cm.CostModels()

print("A 10 m free-space hop at 300 GHz, 20 dBm over 20 GHz:")
budget = LinkBudget().with_path_loss(free_space_path_loss(10.0, 300e9))
print(f"  SNR {budget.snr_db:.1f} dB, rate {achievable_rate(budget) / 1e9:.0f} Gbps\n")

print("Energy per bit at 400 Gbps (pJ/bit):")
print(f"  {'distance':>9} {'thz':>8} {'optical':>8} {'opt+3sw':>8} {'copper':>8}")
for d in (1, 2, 5, 10, 20, 40, 60):
    thz = cm.thz_energy_per_bit(models.thz, models.plm, d, 400e9) * 1e12
    opt = cm.optical_energy_per_bit(models.optical) * 1e12
    sw3 = cm.optical_energy_per_bit(models.optical, 3) * 1e12
    try:
        cu = f"{cm.copper_energy_per_bit(models.copper, d, 400e9) * 1e12:8.1f}"
    except cm.InfeasibleLink:
        cu = f"{'-':>8}"
    print(f"  {d:>7} m {thz:8.2f} {opt:8.2f} {sw3:8.1f} {cu}")

d_star = cm.crossover_distance(models)
print(f"\nTHz matches a switchless optical module at {d_star:.1f} m;")
print("with any switch on the optical path THz stays cheaper out to 100 m.\n")

rates = np.geomspace(10e9, 1e12, 200)
rows = cm.sweep("rate", rates, media=["thz"], fixed_distance=10.0)
print(f"At 10 m the energy curve bottoms out near {cm.sweet_spot(rows) / 1e9:.0f} Gbps:")
print("static power dominates below it, PA power above it.\n")

print("One 1500-bit frame at 400 Gbps, 10 m:")
thz = cm.link_latency("thz", 10, 400e9, 1500)
opt = cm.link_latency("optical", 10, 400e9, 1500, hops=3)
print(f"  THz direct      {thz.total_ns:7.1f} ns  (propagation {thz.propagation_ns:.1f} ns)")
print(f"  optical, 3 sw   {opt.total_ns:7.1f} ns  (switching {sum(opt.switch_ns):.0f} ns, no queuing)")
