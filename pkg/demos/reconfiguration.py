"""A hotspot that moves every millisecond, served by a THz overlay that is
either re-matched each epoch or frozen after the first one.

    python demos/reconfiguration.py
"""

from thzwdc.scenario import load_scenario, run_scenario

scenario = load_scenario("hotspot_shift.scenario")
cfg = scenario.config
print(f"{cfg['racks']['count']} racks, {cfg['radio_count']} radios each, "
      f"{cfg['traffic']['phases']} traffic phases over {cfg['duration_ns'] / 1e6:.0f} ms\n")

runs = {
    "re-matched each epoch": scenario,
    "frozen after epoch 0": scenario.with_overrides(**{"orchestration.reconfigure": False}),
}
print(f"{'overlay':<24}{'served':>8}{'mean ns':>10}{'p99 ns':>10}{'reconfigs':>11}")
for label, sc in runs.items():
    m = run_scenario(sc).metrics
    print(f"{label:<24}{m.served_fraction:8.3f}{m.mean_latency_ns:10.0f}{m.p99_latency_ns:10.0f}{m.reconfigurations:11d}")

print("\nBlockage with and without the twin's predictions (baseline scenario):")
base = load_scenario("baseline.scenario")
for flag in (True, False):
    sc = base.with_overrides(**{"orchestration.predictions": flag})
    m = run_scenario(sc).metrics
    print(f"  predictions={str(flag):<5}  bits lost {m.bits_lost:.3g}, "
          f"blocked time {sum(m.blocked_time_ns.values()) / 1e3:.1f} us")
