"""Scenario files: strict YAML configuration for a full fabric simulation.

Every key has a default (see :data:`SCHEMA`); unknown keys and ill-typed
values are rejected with their dotted key path. The digest hashes the
fully-defaulted, normalized configuration together with the seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from . import costmodels as cm
from .channel import LinkBudget, PathLossModel, free_space_path_loss
from .fabric import TrafficMatrix, build_fat_tree, build_thz_overlay, grid_positions
from .orchestrator import BlockageDynamics, EpochMetrics, FabricSim, Objective
from .simcore import Engine, RngStream

BUNDLED_DIR = Path(__file__).parent / "scenarios"
CONFIG_DIR_ENV = "THZWDC_CONFIG_DIR"


class ScenarioError(ValueError):
    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


# A leaf is (type, default); a nested dict is a sub-block. ``None`` defaults
# mark optional values.
def _block_from(cls) -> dict:
    inst = cls()
    return {f.name: (float, float(getattr(inst, f.name))) for f in dataclasses.fields(cls)}


SCHEMA: dict = {
    "seed": (int, 1),
    "duration_ns": (int, 4_000_000),
    "radio_count": (int, 2),
    "racks": {
        "count": (int, 16),
        "pitch_m": (float, 1.2),
        "per_row": (int, 8),
        "positions": (list, None),
    },
    "fabric": {
        "tiers": (int, 2),
        "link_rate_bps": (float, 100e9),
        "racks_per_tor": (int, 4),
        "tors_per_pod": (int, 2),
        "spine_width": (int, 2),
    },
    "channel": {
        "freq_hz": (float, 300e9),
        "bandwidth_hz": (float, 20e9),
        "tx_power_dbm": (float, 20.0),
        "tx_gain_dbi": (float, 20.0),
        "rx_gain_dbi": (float, 20.0),
        "noise_figure_db": (float, 10.0),
        "p_los": (float, 0.52),
        "nlos_loss_db": (float, 15.0),
        "max_range_m": (float, 100.0),
        "path_loss": {
            "kind": (str, "free-space"),
            "pl0_db": (float, None),
            "exponent_n": (float, 2.0),
            "shadow_sigma_db": (float, 0.0),
        },
    },
    "costmodels": {
        "thz": _block_from(cm.ThzEnergyModel),
        "optical": _block_from(cm.OpticalEnergyModel),
        "copper": _block_from(cm.CopperEnergyModel),
        "latency": _block_from(cm.LatencyParams),
    },
    "traffic": {
        "generator": (str, "uniform"),
        "file": (str, None),
        "total_bps": (float, 400e9),
        "phases": (int, 4),
        "hotspots": (int, 3),
        "hotspot_share": (float, 0.8),
    },
    "orchestration": {
        "objective": (str, "latency"),
        "bandwidth_weight": (float, 0.5),
        "latency_weight": (float, 0.5),
        "epoch_ns": (int, 1_000_000),
        "reconfigure": (bool, True),
        "predictions": (bool, False),
        "lookahead_ns": (int, 0),
        "steering_delay_ns": (int, 100),
        "min_nlos_rate_bps": (float, 10e9),
        "frame_bits": (float, float(cm.DEFAULT_FRAME_BITS)),
        "blockage": {
            "enabled": (bool, True),
            "mean_on_ns": (float, 50e6),
            "mean_off_ns": (float, 5e9),
        },
    },
}

GENERATORS = ("uniform", "hotspot", "file")


def _coerce(path: str, kind: type, value: Any) -> Any:
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioError(path, f"expected true/false, got {value!r}")
        return value
    if kind in (int, float):
        if isinstance(value, bool):
            raise ScenarioError(path, f"expected a number, got {value!r}")
        if isinstance(value, str):
            # YAML 1.1 reads 100e9 as a string
            try:
                value = float(value)
            except ValueError:
                raise ScenarioError(path, f"expected a number, got {value!r}") from None
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ScenarioError(path, f"expected a finite number, got {value!r}")
        if kind is int:
            if float(value) != int(value):
                raise ScenarioError(path, f"expected an integer, got {value!r}")
            return int(value)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(path, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ScenarioError(path, f"expected a list, got {value!r}")
        out = []
        for i, item in enumerate(value):
            if not (isinstance(item, list) and len(item) == 2):
                raise ScenarioError(f"{path}[{i}]", "expected an [x, y] pair")
            out.append([_coerce(f"{path}[{i}]", float, v) for v in item])
        return out
    raise TypeError(kind)


def _merge(schema: dict, data: Any, prefix: str) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(prefix, "expected a mapping")
    for key in data:
        if key not in schema:
            raise ScenarioError(f"{prefix}.{key}" if prefix else str(key), "unknown key")
    out = {}
    for key, spec in schema.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(spec, dict):
            out[key] = _merge(spec, data.get(key), path)
        else:
            kind, default = spec
            out[key] = _coerce(path, kind, data[key]) if key in data else default
    return out


def _validate(cfg: dict) -> None:
    def need(cond: bool, path: str, msg: str) -> None:
        if not cond:
            raise ScenarioError(path, msg)

    need(cfg["seed"] >= 0, "seed", "must be non-negative")
    need(cfg["duration_ns"] > 0, "duration_ns", "must be positive")
    need(cfg["radio_count"] >= 0, "radio_count", "must be non-negative")
    racks = cfg["racks"]
    need(racks["count"] >= 2, "racks.count", "need at least 2 racks")
    need(racks["pitch_m"] > 0, "racks.pitch_m", "must be positive")
    if racks["positions"] is not None:
        need(len(racks["positions"]) == racks["count"], "racks.positions", "length must equal racks.count")
    need(cfg["fabric"]["tiers"] in (1, 2, 3), "fabric.tiers", "must be 1, 2 or 3")
    need(cfg["fabric"]["link_rate_bps"] > 0, "fabric.link_rate_bps", "must be positive")
    need(0.0 <= cfg["channel"]["p_los"] <= 1.0, "channel.p_los", "must lie in [0, 1]")
    need(cfg["channel"]["path_loss"]["kind"] in ("free-space", "close-in"), "channel.path_loss.kind",
         "must be free-space or close-in")
    traffic = cfg["traffic"]
    need(traffic["generator"] in GENERATORS, "traffic.generator", f"must be one of {', '.join(GENERATORS)}")
    need(traffic["generator"] != "file" or traffic["file"] is not None, "traffic.file",
         "required when generator is file")
    need(traffic["phases"] >= 1, "traffic.phases", "must be at least 1")
    need(0.0 <= traffic["hotspot_share"] <= 1.0, "traffic.hotspot_share", "must lie in [0, 1]")
    orch = cfg["orchestration"]
    need(orch["objective"] in ("bandwidth", "latency", "balanced"), "orchestration.objective",
         "must be bandwidth, latency or balanced")
    need(orch["epoch_ns"] > 0, "orchestration.epoch_ns", "must be positive")
    need(orch["lookahead_ns"] >= 0, "orchestration.lookahead_ns", "must be non-negative")
    need(orch["steering_delay_ns"] >= 0, "orchestration.steering_delay_ns", "must be non-negative")
    for path, build in (("costmodels", cost_models), ("channel", link_template),
                        ("orchestration", lambda c: Objective(c["orchestration"]["objective"],
                                                              c["orchestration"]["bandwidth_weight"],
                                                              c["orchestration"]["latency_weight"]))):
        try:
            build(cfg)
        except ValueError as exc:
            raise ScenarioError(path, str(exc)) from None


@dataclass(frozen=True)
class Scenario:
    config: dict
    base_dir: Path = Path(".")

    @property
    def seed(self) -> int:
        return self.config["seed"]

    def with_overrides(self, **changes) -> "Scenario":
        """Copy with dotted-path overrides, e.g. ``{"orchestration.reconfigure": False}``."""
        cfg = json.loads(json.dumps(self.config))
        for dotted, value in changes.items():
            node, spec = cfg, SCHEMA
            *parents, leaf = dotted.split(".")
            for p in parents:
                if not isinstance(spec.get(p), dict):
                    raise ScenarioError(dotted, "unknown key")
                node, spec = node[p], spec[p]
            if leaf not in spec or isinstance(spec[leaf], dict):
                raise ScenarioError(dotted, "unknown key")
            node[leaf] = _coerce(dotted, spec[leaf][0], value)
        _validate(cfg)
        return Scenario(cfg, self.base_dir)

    def normalized(self) -> str:
        return json.dumps(self.config, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        payload = f"{self.normalized()}\nseed={self.seed}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def parse_scenario(text: str, base_dir: Path | str = ".") -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"not valid YAML: {exc}") from None
    cfg = _merge(SCHEMA, data, "")
    _validate(cfg)
    return Scenario(cfg, Path(base_dir))


def resolve_scenario_path(name: str | Path, env: dict | None = None) -> Path:
    """Look in the working directory, then ``$THZWDC_CONFIG_DIR``, then the bundled set."""
    env = os.environ if env is None else env
    path = Path(name)
    if path.exists():
        return path
    candidates = []
    if not path.is_absolute():
        if env.get(CONFIG_DIR_ENV):
            candidates.append(Path(env[CONFIG_DIR_ENV]) / path)
        candidates.append(BUNDLED_DIR / path)
    for c in candidates:
        if c.exists():
            return c
    raise ScenarioError("", f"scenario file not found: {name}")


def load_scenario(name: str | Path) -> Scenario:
    path = resolve_scenario_path(name)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)


# --- building the run ---------------------------------------------------------

def cost_models(cfg: dict) -> cm.CostModels:
    block = cfg["costmodels"]
    return cm.CostModels(
        thz=cm.ThzEnergyModel(**block["thz"]),
        optical=cm.OpticalEnergyModel(**block["optical"]),
        copper=cm.CopperEnergyModel(**block["copper"]),
        plm=path_loss_model(cfg),
        latency=cm.LatencyParams(**block["latency"]),
    )


def path_loss_model(cfg: dict) -> PathLossModel:
    ch = cfg["channel"]
    pl = ch["path_loss"]
    if pl["kind"] == "free-space":
        return PathLossModel.free_space(ch["freq_hz"])
    pl0 = pl["pl0_db"] if pl["pl0_db"] is not None else free_space_path_loss(1.0, ch["freq_hz"])
    return PathLossModel.close_in(ch["freq_hz"], pl0, pl["exponent_n"], pl["shadow_sigma_db"])


def link_template(cfg: dict) -> LinkBudget:
    ch = cfg["channel"]
    return LinkBudget(tx_power_dbm=ch["tx_power_dbm"], tx_gain_dbi=ch["tx_gain_dbi"],
                      rx_gain_dbi=ch["rx_gain_dbi"], noise_figure_db=ch["noise_figure_db"],
                      bandwidth_hz=ch["bandwidth_hz"])


def traffic_phases(scenario: Scenario, racks: list[str]) -> list[TrafficMatrix]:
    """One traffic matrix per phase; hotspot pairs are redrawn every phase."""
    t = scenario.config["traffic"]
    if t["generator"] == "file":
        path = Path(t["file"])
        if not path.is_absolute():
            path = scenario.base_dir / path
        try:
            tm = TrafficMatrix.from_csv(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ScenarioError("traffic.file", str(exc)) from None
        unknown = sorted({n for pair in tm.pairs() for n in pair} - set(racks))
        if unknown:
            raise ScenarioError("traffic.file", f"unknown racks {', '.join(unknown)}")
        return [tm] * t["phases"]

    ordered = list(itertools.permutations(racks, 2))
    pairs = list(itertools.combinations(racks, 2))
    share = t["hotspot_share"] if t["generator"] == "hotspot" else 0.0
    background = t["total_bps"] * (1.0 - share) / len(ordered)
    phases = []
    for k in range(t["phases"]):
        demand = {p: background for p in ordered} if background > 0 else {}
        if share > 0:
            stream = RngStream(scenario.seed, f"traffic/{k}")
            chosen: list[tuple[str, str]] = []
            count = min(t["hotspots"], len(pairs))
            while len(chosen) < count:
                p = pairs[stream.choice(len(pairs))]
                if p not in chosen:
                    chosen.append(p)
            for p in chosen:
                demand[p] = demand.get(p, 0.0) + t["total_bps"] * share / count
        phases.append(TrafficMatrix(demand))
    return phases


@dataclass
class RunResult:
    digest: str
    metrics: EpochMetrics
    event_log_csv: str
    reconfig_log_csv: str

    def metrics_json(self) -> str:
        body = {"digest": self.digest, "metrics": json_safe(self.metrics.as_dict())}
        return json.dumps(body, sort_keys=True, indent=2) + "\n"


def json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def build_sim(scenario: Scenario) -> tuple[FabricSim, list[TrafficMatrix], Objective]:
    cfg = scenario.config
    racks = cfg["racks"]
    positions = racks["positions"] or grid_positions(racks["count"], racks["pitch_m"], racks["per_row"])
    fab = cfg["fabric"]
    topo = build_fat_tree(racks["count"], fab["tiers"], fab["link_rate_bps"],
                          racks_per_tor=fab["racks_per_tor"], tors_per_pod=fab["tors_per_pod"],
                          spine_width=fab["spine_width"], radio_count=cfg["radio_count"],
                          positions=[tuple(p) for p in positions])
    ch = cfg["channel"]
    models = cost_models(cfg)
    candidates = build_thz_overlay(
        topo, cfg["radio_count"], models.plm, ch["p_los"],
        stream=RngStream(scenario.seed, "overlay/blockage"),
        shadow_stream=RngStream(scenario.seed, "overlay/shadowing"),
        template=link_template(cfg), nlos_loss_db=ch["nlos_loss_db"], max_range_m=ch["max_range_m"],
    )
    orch = cfg["orchestration"]
    blk = orch["blockage"]
    sim = FabricSim(
        topo, candidates, Engine(),
        seed=scenario.seed,
        steering_delay_ns=orch["steering_delay_ns"],
        predictions=orch["predictions"],
        lookahead_ns=orch["lookahead_ns"],
        reconfigure=orch["reconfigure"],
        blockage=BlockageDynamics(blk["mean_on_ns"], blk["mean_off_ns"]) if blk["enabled"] else None,
        min_nlos_rate_bps=orch["min_nlos_rate_bps"],
        nlos_loss_db=ch["nlos_loss_db"],
        models=models,
        frame_bits=orch["frame_bits"],
    )
    objective = Objective(orch["objective"], orch["bandwidth_weight"], orch["latency_weight"])
    return sim, traffic_phases(scenario, topo.rack_ids()), objective


def run_scenario(scenario: Scenario) -> RunResult:
    sim, phases, objective = build_sim(scenario)
    cfg = scenario.config
    metrics = sim.run(phases, objective, cfg["orchestration"]["epoch_ns"], cfg["duration_ns"])
    sim.topo.check_invariants()
    return RunResult(scenario.digest(), metrics, sim.engine.event_log_csv(), sim.reconfig_log_csv())
