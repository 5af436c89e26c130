"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 internal invariant
violation. Scenario names are resolved against the working directory,
``$THZWDC_CONFIG_DIR`` and the bundled scenario set, in that order.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import costmodels as cm
from . import padp
from .channel import LinkBudget, PathLossModel, free_space_path_loss, path_loss
from .collectives import (
    AlphaBetaCost,
    CollectiveError,
    CollectiveSpec,
    activate_ring,
    allreduce_ring_time,
    broadcast_tree_time,
    ring_positions,
    simulate_collective,
)
from .fabric import InvariantViolation, Rack, Topology, build_fat_tree, route
from .scenario import ScenarioError, json_safe, load_scenario, run_scenario
from .simcore import Engine

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 2, 3


class UsageError(ValueError):
    pass


def _positive(name: str, value: float) -> float:
    if not value > 0:
        raise UsageError(f"{name} must be positive")
    return value


def _emit(obj) -> None:
    print(json.dumps(json_safe(obj), indent=2, sort_keys=True))


def _gains(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"--gain expects 'tx,rx' dBi, got {text!r}") from None
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) != 2:
        raise UsageError(f"--gain expects 'tx,rx' dBi, got {text!r}")
    return vals[0], vals[1]


# --- linkbudget ---------------------------------------------------------------

def cmd_linkbudget(args) -> int:
    _positive("distance", args.distance)
    _positive("freq", args.freq)
    _positive("bandwidth", args.bandwidth)
    tx_gain, rx_gain = _gains(args.gain)
    if args.exponent is None:
        model = PathLossModel.free_space(args.freq)
    else:
        pl0 = args.pl0 if args.pl0 is not None else free_space_path_loss(1.0, args.freq)
        model = PathLossModel.close_in(args.freq, pl0, _positive("exponent", args.exponent))
    if args.distance < model.d0:
        raise UsageError(f"distance must be at least the {model.d0:g} m reference distance")
    budget = LinkBudget(args.tx_power, tx_gain, rx_gain, path_loss(model, args.distance), args.nf,
                        args.bandwidth)
    report = budget.report()
    report.update(distance_m=args.distance, freq_hz=args.freq, path_loss_model=model.kind)
    _emit(report)
    return EXIT_OK


# --- sweep ----------------------------------------------------------------------

def _grid(args) -> list[float]:
    if args.points is not None:
        if args.points < 1 or args.stop < args.start:
            raise UsageError("empty grid")
        if args.log:
            _positive("start", args.start)
            return [float(v) for v in np.geomspace(args.start, args.stop, args.points)]
        return [float(v) for v in np.linspace(args.start, args.stop, args.points)]
    _positive("step", args.step)
    count = math.floor((args.stop - args.start) / args.step + 1e-9) + 1
    if count < 1:
        raise UsageError("empty grid")
    return [args.start + i * args.step for i in range(count)]


def sweep_summary(rows: list[cm.SweepRow], args, models: cm.CostModels) -> dict:
    media = list(dict.fromkeys(r.medium for r in rows))
    summary: dict = {"axis": args.axis, "points": len(rows) // max(1, len(media)), "media": {}}
    for m in media:
        e = [r.energy_j_per_bit * 1e12 for r in rows if r.medium == m and r.feasible]
        summary["media"][m] = {"min_pj_per_bit": min(e) if e else None,
                               "max_pj_per_bit": max(e) if e else None,
                               "feasible_points": len(e)}
    if "thz" in media:
        thz = [r for r in rows if r.medium == "thz"]
        if args.axis == "distance":
            reach = None
            for r in thz:
                if not (r.feasible and r.energy_j_per_bit * 1e12 < 10.0):
                    break
                reach = r.axis_value
            summary["thz_below_10pj_up_to_m"] = reach
            summary["crossover_distance_m"] = cm.crossover_distance(models, args.rate, 0, args.stop)
        else:
            summary["thz_sweet_rate_bps"] = cm.sweet_spot(rows, "thz")
    return summary


def cmd_sweep(args) -> int:
    if args.axis == "rate":
        args.start = args.start if args.start is not None else 10e9
        args.stop = args.stop if args.stop is not None else 1000e9
        args.step = args.step if args.step is not None else 10e9
    else:
        args.start = args.start if args.start is not None else 1.0
        args.stop = args.stop if args.stop is not None else 100.0
        args.step = args.step if args.step is not None else 1.0
    media = [m.strip() for m in args.media.split(",") if m.strip()]
    bad = [m for m in media if m not in ("thz", "optical", "copper")]
    if bad or not media:
        raise UsageError(f"--media takes thz, optical, copper; got {args.media!r}")
    if args.switches < 0:
        raise UsageError("switches must be non-negative")
    _positive("distance", args.distance)
    _positive("rate", args.rate)
    grid = _grid(args)
    models = cm.CostModels()
    rows = cm.sweep(args.axis, grid, media, models, fixed_distance=args.distance,
                    fixed_rate=args.rate, optical_hops=args.switches)
    text = cm.sweep_csv(rows)
    summary = sweep_summary(rows, args, models)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
        summary["out"] = args.out
    else:
        sys.stdout.write(text)
    (sys.stderr if not args.out else sys.stdout).write(json.dumps(json_safe(summary), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# --- simulate -------------------------------------------------------------------

def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key.path=value, got {item!r}")
        out[key] = yaml.safe_load(value)
    return out


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    overrides = _parse_set(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        scenario = scenario.with_overrides(**overrides)
    result = run_scenario(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"event_log": out / "events.csv", "reconfig_log": out / "reconfig.csv",
                 "metrics": out / "metrics.json"}
    artifacts["event_log"].write_text(result.event_log_csv, encoding="utf-8", newline="\n")
    artifacts["reconfig_log"].write_text(result.reconfig_log_csv, encoding="utf-8", newline="\n")
    artifacts["metrics"].write_text(result.metrics_json(), encoding="utf-8", newline="\n")
    _emit({"digest": result.digest, "metrics": result.metrics.as_dict(),
           "artifacts": {k: str(v) for k, v in artifacts.items()}})
    return EXIT_OK


# --- allreduce ------------------------------------------------------------------

def _ring_fabric(n: int, spacing: float, rate: float) -> tuple[Topology, list[str]]:
    topo = Topology(Rack(f"r{i}", x, y, 2) for i, (x, y) in enumerate(ring_positions(n, spacing)))
    nodes = topo.rack_ids()
    activate_ring(topo, nodes, rate)
    return topo, nodes


def cmd_allreduce(args) -> int:
    if args.nodes < 2:
        raise UsageError("nodes must be at least 2")
    _positive("bits", args.bits)
    _positive("rate", args.rate)
    _positive("spacing", args.spacing)
    spec = CollectiveSpec(args.op, args.nodes, args.bits)
    if args.fabric == "thz-ring":
        topo, nodes = _ring_fabric(args.nodes, args.spacing, args.rate)
        medium = "thz"
        cost = AlphaBetaCost.from_link("thz", args.spacing, args.rate)
    else:
        topo = build_fat_tree(args.nodes, args.tiers, args.rate)
        nodes = topo.rack_ids()
        medium = "optical"
        # slowest neighbour path sets alpha; the analytic form ignores uplink contention
        alpha = max(route(topo, nodes[i], nodes[(i + 1) % len(nodes)], frame_bits=0).latency_ns
                    for i in range(len(nodes)))
        cost = AlphaBetaCost.from_rate(alpha, args.rate)
    if spec.op == "allreduce-ring":
        analytic = allreduce_ring_time(spec, cost)
    else:
        analytic = broadcast_tree_time(spec, cost, args.fanout)
    result = simulate_collective(spec, topo, Engine(), nodes=nodes, medium=medium, fanout=args.fanout)
    report = result.report(args.fabric, analytic)
    report["ratio"] = result.completion_ns / analytic
    if not args.trace:
        report.pop("steps")
    _emit(report)
    return EXIT_OK


# --- fit / synth ----------------------------------------------------------------

def _padp_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"{p}: no such file or directory")
    if not files:
        raise UsageError("no PADP files given")
    return files


def cmd_fit(args) -> int:
    points = []
    for f in _padp_files(args.paths):
        d = padp.distance_from_name(f)
        records = padp.parse_padp(f)
        points.append((d, padp.padp_path_loss(records, args.reference_dbm, args.noise_floor)))
    anchor = free_space_path_loss(1.0, args.freq) if args.anchor else None
    fit = padp.fit_close_in(points, anchor_pl0_db=anchor)
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("distance_m", "path_loss_db", "residual_db"))
        for (d, pl), r in zip(points, fit.residuals):
            w.writerow((repr(float(d)), repr(float(pl)), repr(r)))
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    print(fit.to_json())
    return EXIT_OK


def cmd_synth(args) -> int:
    _positive("exponent", args.exponent)
    if args.sigma < 0:
        raise UsageError("sigma must be non-negative")
    if args.count < 1 or not 0 < args.dmin <= args.dmax:
        raise UsageError("need count >= 1 and 0 < dmin <= dmax")
    truth = PathLossModel.close_in(args.freq, free_space_path_loss(1.0, args.freq), args.exponent, args.sigma)
    mpcs = [padp.Mpc(1.0, 0.0, 0.0, 0.0), padp.Mpc(2.5, 120.0, 5.0, -6.0), padp.Mpc(4.0, 240.0, -10.0, -10.0)]
    # geomspace jitters the last digit when dmin == dmax
    if args.dmin == args.dmax:
        distances = np.full(args.count, args.dmin)
    else:
        distances = np.geomspace(args.dmin, args.dmax, args.count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    padp.generate_campaign(truth, mpcs, distances, args.seed, out)
    _emit({"files": args.count, "out": str(out), "n": args.exponent, "sigma_db": args.sigma, "seed": args.seed})
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thzwdc", description="THz wireless data-center fabric toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    lb = sub.add_parser("linkbudget", help="link budget and achievable rate for one THz hop")
    lb.add_argument("--distance", type=float, default=10.0, help="metres (default 10)")
    lb.add_argument("--freq", type=float, default=300e9, help="carrier Hz (default 300e9)")
    lb.add_argument("--bandwidth", type=float, default=20e9, help="Hz (default 20e9)")
    lb.add_argument("--gain", default="20,20", help="tx,rx antenna gain dBi (default 20,20)")
    lb.add_argument("--nf", type=float, default=10.0, help="receiver noise figure dB (default 10)")
    lb.add_argument("--tx-power", type=float, default=20.0, help="dBm (default 20)")
    lb.add_argument("--exponent", type=float, help="close-in exponent; free space when omitted")
    lb.add_argument("--pl0", type=float, help="close-in intercept dB at 1 m (default Friis)")
    lb.set_defaults(func=cmd_linkbudget)

    sw = sub.add_parser("sweep", help="energy/latency sweep over distance or rate")
    sw.add_argument("--axis", choices=("distance", "rate"), default="distance")
    sw.add_argument("--start", type=float)
    sw.add_argument("--stop", type=float)
    sw.add_argument("--step", type=float)
    sw.add_argument("--points", type=int, help="grid points between start and stop (overrides --step)")
    sw.add_argument("--log", action="store_true", help="log-spaced grid with --points")
    sw.add_argument("--media", default="thz,optical,copper")
    sw.add_argument("--switches", type=int, default=0, help="optical switch hops")
    sw.add_argument("--distance", type=float, default=10.0, help="fixed distance for rate sweeps")
    sw.add_argument("--rate", type=float, default=400e9, help="fixed rate for distance sweeps")
    sw.add_argument("--out", help="CSV path; rows go to stdout when omitted")
    sw.set_defaults(func=cmd_sweep)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("scenario")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    sim.add_argument("--out", default="run", help="output directory (default ./run)")
    sim.set_defaults(func=cmd_simulate)

    ar = sub.add_parser("allreduce", help="analytic vs simulated collective time")
    ar.add_argument("--nodes", type=int, default=4)
    ar.add_argument("--bits", type=float, default=4e6)
    ar.add_argument("--fabric", choices=("thz-ring", "optical-fattree"), default="thz-ring")
    ar.add_argument("--op", choices=("allreduce-ring", "broadcast-tree"), default="allreduce-ring")
    ar.add_argument("--fanout", type=int, default=2)
    ar.add_argument("--rate", type=float, default=400e9, help="link rate bps")
    ar.add_argument("--spacing", type=float, default=10.0, help="ring neighbour distance m")
    ar.add_argument("--tiers", type=int, choices=(1, 2, 3), default=3)
    ar.add_argument("--trace", action="store_true", help="include per-step sends")
    ar.set_defaults(func=cmd_allreduce)

    fit = sub.add_parser("fit", help="close-in path-loss fit of PADP files")
    fit.add_argument("paths", nargs="+", help="PADP files or directories named *_d<metres>m.csv")
    fit.add_argument("--anchor", action="store_true", help="hold pl0 at the Friis value")
    fit.add_argument("--freq", type=float, default=300e9)
    fit.add_argument("--reference-dbm", type=float, default=padp.DEFAULT_REFERENCE_DBM)
    fit.add_argument("--noise-floor", type=float, default=padp.DEFAULT_NOISE_FLOOR_DBM)
    fit.add_argument("--out", help="residuals CSV path")
    fit.set_defaults(func=cmd_fit)

    sy = sub.add_parser("synth-padp", help="write a seeded synthetic PADP campaign")
    sy.add_argument("--exponent", type=float, default=2.0)
    sy.add_argument("--sigma", type=float, default=0.0)
    sy.add_argument("--count", type=int, default=50)
    sy.add_argument("--dmin", type=float, default=1.0)
    sy.add_argument("--dmax", type=float, default=50.0)
    sy.add_argument("--freq", type=float, default=300e9)
    sy.add_argument("--seed", type=int, default=1)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UsageError, ScenarioError, CollectiveError, padp.PadpFormatError, padp.FitError,
            cm.InfeasibleLink, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
