"""End-to-end acceptance suite. Each test checks one numbered criterion; the
terminal summary prints a PASS/FAIL line per criterion (see conftest.py).

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_b_matching, dp_b_matching, milp_b_matching
from thzwdc import costmodels as cm
from thzwdc.channel import PathLossModel, free_space_path_loss, sample_blockage
from thzwdc.collectives import (
    AlphaBetaCost,
    CollectiveSpec,
    activate_ring,
    allreduce_ring_time,
    ring_positions,
    simulate_collective,
)
from thzwdc.fabric import Link, Rack, Topology, TrafficMatrix
from thzwdc.orchestrator import Objective, edge_weights, select_links
from thzwdc.padp import Mpc, fit_campaign, generate_campaign
from thzwdc.scenario import load_scenario, run_scenario
from thzwdc.simcore import Engine, RngStream

GOLDEN = Path(__file__).parent / "golden"
MODELS = cm.CostModels()


def thz_energy(d, rate):
    return cm.thz_energy_per_bit(MODELS.thz, MODELS.plm, d, rate)


@pytest.mark.criterion(1, "THz propagation delay at 10 m is 33.36 ns")
def test_propagation_latency(record_property):
    delay = cm.propagation_delay("thz", 10.0)
    record_property("delay_ns", round(delay, 4))
    assert abs(delay - 33.36) <= 0.05


@pytest.mark.criterion(2, "one-hop THz < 50 ns; 3-switch optical within 1-5 us")
def test_latency_envelope(record_property):
    thz = [cm.link_latency("thz", d, rate, frame).total_ns
           for d in np.arange(1.0, 10.01, 0.5) for rate in (400e9, 800e9, 1e12) for frame in (64, 512, 1500)]
    stream = RngStream(2, "acceptance/queue")
    optical = [cm.link_latency("optical", d, 400e9, hops=3, queue_stream=stream).total_ns
               for d in (10.0, 50.0, 100.0) for _ in range(100)]
    record_property("thz_max_ns", round(max(thz), 2))
    record_property("optical_range_ns", f"{min(optical):.0f}-{max(optical):.0f}")
    assert max(thz) < 50.0
    assert all(1000.0 <= t <= 5000.0 for t in optical)


@pytest.mark.criterion(3, "THz energy < 10 pJ/bit to 20 m and < 1 pJ/bit to 5 m at 100-400 Gbps")
def test_energy_calibration(record_property):
    rates = np.arange(100e9, 400e9 + 1, 25e9)
    worst20 = max(thz_energy(d, r) for d in range(1, 21) for r in rates)
    worst5 = max(thz_energy(d, r) for d in range(1, 6) for r in rates)
    record_property("max_pj_20m", round(worst20 * 1e12, 3))
    record_property("max_pj_5m", round(worst5 * 1e12, 3))
    assert worst20 < 10e-12 and worst5 < 1e-12


@pytest.mark.criterion(4, "optical 31.25 pJ/bit module; 3 switches within 0.5-2 nJ/bit")
def test_optical_energy(record_property):
    module = cm.optical_energy_per_bit(MODELS.optical, 0)
    switched = cm.optical_energy_per_bit(MODELS.optical, 3)
    record_property("module_pj", module * 1e12)
    record_property("three_switch_nj", round(switched * 1e9, 5))
    assert module * 1e12 == pytest.approx(31.25)
    assert 20e-12 <= module <= 40e-12
    assert switched * 1e9 == pytest.approx(0.87125)
    assert 0.5e-9 <= switched <= 2e-9


@pytest.mark.criterion(5, "THz rate sweep at 10 m has a unique interior minimum in 100-1000 Gbps")
def test_sweet_region(record_property):
    grid = np.geomspace(10e9, 1e12, 200)
    rows = cm.sweep("rate", grid, media=["thz"], fixed_distance=10.0)
    energy = np.array([r.energy_j_per_bit for r in rows])
    assert all(r.feasible for r in rows)
    k = int(np.argmin(energy))
    record_property("min_rate_gbps", round(grid[k] / 1e9, 1))
    assert 0 < k < len(grid) - 1
    assert 100e9 <= grid[k] <= 1000e9
    # quasi-convex: strictly down to the minimum, strictly up after it
    assert np.all(np.diff(energy[: k + 1]) < 0)
    assert np.all(np.diff(energy[k:]) > 0)


@pytest.mark.criterion(6, "THz crosses switchless optical within 100 m, stays below switched optical")
def test_crossover_structure(record_property):
    d_star = cm.crossover_distance(MODELS, 400e9, optical_hops=0, d_max=100.0)
    record_property("crossover_m", None if d_star is None else round(d_star, 2))
    assert d_star is not None and 0 < d_star <= 100.0
    for hops in (1, 3):
        ceiling = cm.optical_energy_per_bit(MODELS.optical, hops)
        assert all(thz_energy(d, 400e9) < ceiling for d in np.arange(1.0, 100.01, 1.0))


def _matching_instance(rng, n_racks, max_radios):
    racks = [f"r{i}" for i in range(n_racks)]
    caps = {r: int(rng.integers(1, max_radios + 1)) for r in racks}
    cands = [Link(a, b, "thz", float(rng.choice([100e9, 200e9, 400e9])), "inactive", 1.0 + float(rng.random()) * 9)
             for a, b in itertools.combinations(racks, 2) if rng.random() < 0.75]
    demand = {(a, b): float(rng.integers(1, 500)) * 1e9
              for a, b in itertools.permutations(racks, 2) if rng.random() < 0.5}
    return cands, TrafficMatrix(demand), caps


@pytest.mark.criterion(7, "select_links optimal on small instances, >= 1/2 optimal on 10,000 larger ones")
def test_matching_oracle(record_property):
    start = time.perf_counter()
    obj = Objective("bandwidth")
    rng = np.random.default_rng(7)
    small = 0
    brute_checked = 0
    for _ in range(600):
        cands, tm, caps = _matching_instance(rng, int(rng.integers(2, 9)), 2)
        plan = select_links(cands, tm, caps, obj)
        weights = edge_weights(cands, tm, obj)
        best = dp_b_matching(weights, caps)
        if sum(1 for w in weights.values() if w > 0) <= 14:
            assert brute_force_b_matching(weights, caps) == pytest.approx(best, rel=1e-12)
            brute_checked += 1
        assert plan.matched_weight == pytest.approx(best, rel=1e-12, abs=1e-6)
        small += 1

    rng = np.random.default_rng(8)
    worst = math.inf
    greedy_used = 0
    for _ in range(10_000):
        cands, tm, caps = _matching_instance(rng, int(rng.integers(9, 15)), 3)
        weights = edge_weights(cands, tm, obj)
        greedy_used += sum(1 for w in weights.values() if w > 0) > 28
        plan = select_links(cands, tm, caps, obj)
        best = milp_b_matching(weights, caps)
        if best > 0:
            worst = min(worst, plan.matched_weight / best)
    elapsed = time.perf_counter() - start
    record_property("exact_instances", small)
    record_property("brute_force_crosschecks", brute_checked)
    record_property("greedy_instances", greedy_used)
    record_property("worst_ratio", round(worst, 4))
    record_property("seconds", round(elapsed, 1))
    assert small >= 500
    assert worst >= 0.5
    assert elapsed < 60.0


def _ring(n, spacing=10.0, rate=400e9):
    topo = Topology(Rack(f"r{i}", x, y, 2) for i, (x, y) in enumerate(ring_positions(n, spacing)))
    nodes = topo.rack_ids()
    activate_ring(topo, nodes, rate)
    return topo, nodes


@pytest.mark.criterion(8, "ring AllReduce simulation within 1% of closed form; bandwidth limit to 0.1%")
def test_collectives_oracle(record_property):
    worst = 0.0
    for n in (2, 4, 8, 16):
        topo, nodes = _ring(n)
        spec = CollectiveSpec("allreduce-ring", n, 8e6)
        sim = simulate_collective(spec, topo, Engine(), nodes=nodes, medium="thz")
        analytic = allreduce_ring_time(spec, AlphaBetaCost.from_link("thz", 10.0, 400e9))
        worst = max(worst, abs(sim.completion_ns / analytic - 1))
        cost = AlphaBetaCost.from_rate(50.0, 400e9)
        m = 1e14
        ratio = allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m), cost) / m
        assert ratio == pytest.approx(2 * (n - 1) / n * cost.beta_ns_per_bit, rel=1e-3)
    record_property("worst_rel_error", f"{worst:.2e}")
    assert worst <= 0.01


@pytest.mark.criterion(9, "PADP synthetic round-trip recovers n and sigma")
def test_padp_round_trip(record_property):
    freq = 300e9
    pl0 = free_space_path_loss(1.0, freq)
    mpcs = [Mpc(1.0, 0.0, 0.0, 0.0), Mpc(2.5, 120.0, 5.0, -6.0), Mpc(4.0, 240.0, -10.0, -10.0)]
    distances = np.geomspace(1.0, 50.0, 200)
    errs_n, errs_s = [], []
    for seed, (n, sigma) in enumerate(itertools.product((1.8, 2.0, 2.5), (0.0, 3.0)), start=1):
        truth = PathLossModel.close_in(freq, pl0, n, sigma)
        fit = fit_campaign(generate_campaign(truth, mpcs, distances, seed))
        err_n, err_s = abs(fit.exponent_n - n), abs(fit.shadow_sigma_db - sigma)
        errs_n.append(err_n)
        errs_s.append(err_s)
        if sigma == 0:
            assert err_n <= 0.01
        else:
            assert err_n <= 0.1 and err_s <= 0.5
    record_property("max_n_error", round(max(errs_n), 4))
    record_property("max_sigma_error", round(max(errs_s), 3))


@pytest.mark.criterion(10, "LoS fraction 0.52 +/- 0.01 over 1e5 sampled links")
def test_blockage_statistics(record_property):
    stream = RngStream(10, "acceptance/blockage")
    los = sum(sample_blockage(0.52, 15.0, stream).state == "los" for _ in range(100_000))
    record_property("los_fraction", los / 100_000)
    assert abs(los / 100_000 - 0.52) <= 0.01


@pytest.mark.criterion(11, "baseline simulation is byte-identical across runs and matches golden files")
def test_determinism(record_property):
    sc = load_scenario("baseline.scenario")
    first, second = run_scenario(sc), run_scenario(sc)
    record_property("digest", first.digest[:16])
    assert first.digest == second.digest
    assert first.event_log_csv == second.event_log_csv
    assert first.metrics_json() == second.metrics_json()
    assert first.digest == (GOLDEN / "baseline_digest.txt").read_text().strip()
    assert first.event_log_csv.encode() == (GOLDEN / "baseline_events.csv").read_bytes()


@pytest.mark.criterion(12, "epoch reconfiguration beats the frozen overlay on hotspot_shift")
def test_reconfiguration_benefit(record_property):
    sc = load_scenario("hotspot_shift.scenario")
    live = run_scenario(sc).metrics
    frozen = run_scenario(sc.with_overrides(**{"orchestration.reconfigure": False})).metrics
    record_property("served", f"{live.served_fraction:.3f} vs {frozen.served_fraction:.3f}")
    record_property("mean_latency_ns", f"{live.mean_latency_ns:.0f} vs {frozen.mean_latency_ns:.0f}")
    assert live.served_fraction > frozen.served_fraction
    assert live.mean_latency_ns < frozen.mean_latency_ns


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
