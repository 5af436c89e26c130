"""Latency and energy-per-bit models for THz, optical and copper links.

The THz energy figure excludes digital baseband processing: it is static
front-end power plus the PA power needed to close the link budget at the
requested rate, divided by that rate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import (
    DEFAULT_GAIN_DBI,
    DEFAULT_NOISE_FIGURE_DB,
    RATE_CEILING_BPS,
    SPEED_OF_LIGHT,
    LinkBudget,
    PathLossModel,
    required_tx_power,
)
from .simcore import RngStream

FIBER_GROUP_INDEX = 1.468
COPPER_VELOCITY_FACTOR = 0.7

THZ_ALIGNMENT_NS = 5.0
THZ_PROCESSING_NS = 6.0
OPTICAL_PER_SWITCH_NS = 600.0
OPTICAL_QUEUE_MEAN_NS = 400.0
DEFAULT_FRAME_BITS = 12000

ONE_HOP_TARGET_NS = 50.0

SWEEP_HEADER = ("axis", "axis_value", "medium", "energy_pj_per_bit", "latency_ns", "feasible")

_MEDIUM_ALIASES = {
    "thz": "thz-air",
    "thz-air": "thz-air",
    "optical": "fiber",
    "fiber": "fiber",
    "copper": "copper",
}


class InfeasibleLink(ValueError):
    """The medium cannot serve the requested distance/rate."""


def _medium(name: str) -> str:
    try:
        return _MEDIUM_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown medium {name!r}") from None


def propagation_delay(medium: str, distance: float, fiber_index: float = FIBER_GROUP_INDEX) -> float:
    """One-way propagation delay in ns."""
    if distance < 0:
        raise ValueError("distance must be non-negative")
    m = _medium(medium)
    if m == "thz-air":
        speed = SPEED_OF_LIGHT
    elif m == "fiber":
        speed = SPEED_OF_LIGHT / fiber_index
    else:
        speed = COPPER_VELOCITY_FACTOR * SPEED_OF_LIGHT
    return distance / speed * 1e9


def serialization_delay(frame_bits: float, rate: float) -> float:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return frame_bits / rate * 1e9


@dataclass(frozen=True)
class LatencyParams:
    alignment_ns: float = THZ_ALIGNMENT_NS
    processing_ns: float = THZ_PROCESSING_NS
    per_switch_ns: float = OPTICAL_PER_SWITCH_NS
    queue_mean_ns: float = OPTICAL_QUEUE_MEAN_NS
    fiber_index: float = FIBER_GROUP_INDEX
    copper_max_reach_m: float = 5.0


DEFAULT_LATENCY = LatencyParams()


@dataclass(frozen=True)
class LatencyBudget:
    propagation_ns: float
    serialization_ns: float
    alignment_ns: float = 0.0
    processing_ns: float = 0.0
    switch_ns: tuple[float, ...] = ()
    queuing_ns: float = 0.0

    def __post_init__(self):
        parts = (self.propagation_ns, self.serialization_ns, self.alignment_ns,
                 self.processing_ns, self.queuing_ns, *self.switch_ns)
        if any(p < 0 for p in parts):
            raise ValueError("latency components must be non-negative")

    @property
    def hops(self) -> int:
        return len(self.switch_ns)

    @property
    def total_ns(self) -> float:
        return (self.propagation_ns + self.serialization_ns + self.alignment_ns
                + self.processing_ns + sum(self.switch_ns) + self.queuing_ns)

    def __add__(self, other: "LatencyBudget") -> "LatencyBudget":
        return LatencyBudget(
            self.propagation_ns + other.propagation_ns,
            self.serialization_ns + other.serialization_ns,
            self.alignment_ns + other.alignment_ns,
            self.processing_ns + other.processing_ns,
            self.switch_ns + other.switch_ns,
            self.queuing_ns + other.queuing_ns,
        )


def link_latency(
    medium: str,
    distance: float,
    rate: float,
    frame_bits: float = DEFAULT_FRAME_BITS,
    hops: int = 0,
    params: LatencyParams = DEFAULT_LATENCY,
    queue_stream: RngStream | None = None,
) -> LatencyBudget:
    """Latency of one frame over a link or switched path.

    Switched paths are store-and-forward, so the frame is serialized once per
    segment (``hops + 1`` times). A single exponential queuing draw is taken
    per path when ``queue_stream`` is given.
    """
    m = _medium(medium)
    if hops < 0:
        raise ValueError("hops must be non-negative")
    if m == "thz-air":
        if hops:
            raise ValueError("THz links are single-hop; hops must be 0")
        return LatencyBudget(
            propagation_delay(m, distance),
            serialization_delay(frame_bits, rate),
            params.alignment_ns,
            params.processing_ns,
        )
    if m == "copper" and distance > params.copper_max_reach_m:
        raise InfeasibleLink(f"copper reach {params.copper_max_reach_m} m exceeded ({distance} m)")
    queuing = 0.0
    if queue_stream is not None and hops:
        queuing = queue_stream.exponential(params.queue_mean_ns)
    return LatencyBudget(
        propagation_delay(m, distance, params.fiber_index),
        (hops + 1) * serialization_delay(frame_bits, rate),
        switch_ns=(params.per_switch_ns,) * hops,
        queuing_ns=queuing,
    )


@dataclass(frozen=True)
class ThzEnergyModel:
    static_power_w: float = 0.05
    pa_efficiency: float = 0.15
    bandwidth_hz: float = 100e9
    tx_gain_dbi: float = DEFAULT_GAIN_DBI
    rx_gain_dbi: float = DEFAULT_GAIN_DBI
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB
    pa_max_dbm: float = 40.0
    ceiling_bps: float = RATE_CEILING_BPS

    def __post_init__(self):
        if self.static_power_w <= 0:
            raise ValueError("static_power_w must be positive")
        if not 0 < self.pa_efficiency <= 1:
            raise ValueError("pa_efficiency must lie in (0, 1]")

    @property
    def template(self) -> LinkBudget:
        return LinkBudget(
            tx_power_dbm=0.0,
            tx_gain_dbi=self.tx_gain_dbi,
            rx_gain_dbi=self.rx_gain_dbi,
            noise_figure_db=self.noise_figure_db,
            bandwidth_hz=self.bandwidth_hz,
        )


@dataclass(frozen=True)
class OpticalEnergyModel:
    module_power_w: float = 12.5
    module_rate_bps: float = 400e9
    switch_energy_j_per_bit: float = 0.28e-9
    fiber_index: float = FIBER_GROUP_INDEX

    def __post_init__(self):
        if self.switch_energy_j_per_bit < 0:
            raise ValueError("switch energy must be non-negative")


@dataclass(frozen=True)
class CopperEnergyModel:
    base_j_per_bit: float = 75e-12
    equalized_j_per_bit: float = 120e-12
    max_reach_m: float = 5.0
    equalization_threshold_bps: float = 400e9

    def __post_init__(self):
        if self.equalized_j_per_bit < self.base_j_per_bit:
            raise ValueError("equalized energy must not be below the base energy")


def pa_output_dbm(model: ThzEnergyModel, plm: PathLossModel, distance: float, rate: float) -> float:
    return required_tx_power(rate, model.template, plm, distance, model.ceiling_bps, extrapolate=True)


def thz_energy_per_bit(model: ThzEnergyModel, plm: PathLossModel, distance: float, rate: float) -> float:
    """Joules per bit of a THz link; raises :class:`InfeasibleLink` past the PA limit."""
    if not 0 < rate <= model.ceiling_bps:
        raise ValueError(f"rate must lie in (0, {model.ceiling_bps:g}]")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if distance == 0:
        return model.static_power_w / rate
    p_dbm = pa_output_dbm(model, plm, distance, rate)
    if p_dbm > model.pa_max_dbm:
        raise InfeasibleLink(
            f"PA output {p_dbm:.1f} dBm exceeds {model.pa_max_dbm} dBm at {distance} m, {rate:g} bit/s"
        )
    pa_w = 10.0 ** ((p_dbm - 30.0) / 10.0)
    return (model.static_power_w + pa_w / model.pa_efficiency) / rate


def optical_energy_per_bit(model: OpticalEnergyModel, hops: int = 0) -> float:
    if hops < 0:
        raise ValueError("hops must be non-negative")
    return model.module_power_w / model.module_rate_bps + hops * model.switch_energy_j_per_bit


def copper_energy_per_bit(model: CopperEnergyModel, distance: float, rate: float) -> float:
    if distance > model.max_reach_m:
        raise InfeasibleLink(f"copper reach {model.max_reach_m} m exceeded ({distance} m)")
    if rate >= model.equalization_threshold_bps:
        return model.equalized_j_per_bit
    return model.base_j_per_bit


@dataclass(frozen=True)
class SweepRow:
    axis: str
    axis_value: float
    medium: str
    energy_j_per_bit: float
    latency_ns: float
    feasible: bool


@dataclass(frozen=True)
class CostModels:
    thz: ThzEnergyModel = field(default_factory=ThzEnergyModel)
    optical: OpticalEnergyModel = field(default_factory=OpticalEnergyModel)
    copper: CopperEnergyModel = field(default_factory=CopperEnergyModel)
    plm: PathLossModel = field(default_factory=PathLossModel.free_space)
    latency: LatencyParams = DEFAULT_LATENCY


def _point(medium: str, distance: float, rate: float, models: CostModels,
           optical_hops: int, frame_bits: float) -> tuple[float, float, bool]:
    try:
        if medium == "thz":
            energy = thz_energy_per_bit(models.thz, models.plm, distance, rate)
            lat = link_latency("thz", distance, rate, frame_bits, 0, models.latency)
        elif medium == "optical":
            energy = optical_energy_per_bit(models.optical, optical_hops)
            lat = link_latency("optical", distance, rate, frame_bits, optical_hops, models.latency)
        elif medium == "copper":
            energy = copper_energy_per_bit(models.copper, distance, rate)
            params = replace(models.latency, copper_max_reach_m=models.copper.max_reach_m)
            lat = link_latency("copper", distance, rate, frame_bits, 0, params)
        else:
            raise ValueError(f"unknown medium {medium!r}")
    except InfeasibleLink:
        return math.nan, math.nan, False
    return energy, lat.total_ns, True


def sweep(
    axis: str,
    grid: Sequence[float],
    media: Iterable[str] = ("thz", "optical", "copper"),
    models: CostModels = CostModels(),
    *,
    fixed_distance: float = 10.0,
    fixed_rate: float = 400e9,
    optical_hops: int = 0,
    frame_bits: float = DEFAULT_FRAME_BITS,
) -> list[SweepRow]:
    """Energy/latency table over a distance or rate grid.

    Rows come out grid-point-major, media in the given order. Infeasible
    points are kept with ``feasible=False`` and NaN values.
    """
    if axis not in ("distance", "rate"):
        raise ValueError("axis must be 'distance' or 'rate'")
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("empty grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    media = list(media)
    rows = []
    for value in grid:
        distance, rate = (value, fixed_rate) if axis == "distance" else (fixed_distance, value)
        for medium in media:
            energy, lat, ok = _point(medium, distance, rate, models, optical_hops, frame_bits)
            rows.append(SweepRow(axis, value, medium, energy, lat, ok))
    return rows


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in rows:
        writer.writerow((r.axis, _num(r.axis_value), r.medium, _num(r.energy_j_per_bit * 1e12),
                         _num(r.latency_ns), "true" if r.feasible else "false"))
    return buf.getvalue()


def _column(rows: Iterable[SweepRow], medium: str) -> tuple[np.ndarray, np.ndarray]:
    sel = [r for r in rows if r.medium == medium and r.feasible]
    return (np.array([r.axis_value for r in sel]), np.array([r.energy_j_per_bit for r in sel]))


def sweet_spot(rows: Sequence[SweepRow], medium: str = "thz") -> float | None:
    """Axis value of the minimum-energy feasible point for ``medium``."""
    x, e = _column(rows, medium)
    if not len(x):
        return None
    return float(x[int(np.argmin(e))])


def crossover_distance(
    models: CostModels = CostModels(),
    rate: float = 400e9,
    optical_hops: int = 0,
    d_max: float = 100.0,
) -> float | None:
    """Smallest distance at which THz energy/bit reaches optical with ``optical_hops`` switches.

    Located by bisection on the (monotone) THz curve; ``None`` if THz stays
    below optical up to ``d_max``.
    """
    target = optical_energy_per_bit(models.optical, optical_hops)

    def excess(d: float) -> float:
        try:
            return thz_energy_per_bit(models.thz, models.plm, d, rate) - target
        except InfeasibleLink:
            return math.inf

    if excess(d_max) < 0:
        return None
    lo, hi = 0.0, d_max
    if excess(lo) >= 0:
        return 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi
