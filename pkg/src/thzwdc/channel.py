"""THz propagation: path loss, link budget, achievable rate and blockage."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

from .simcore import RngStream

SPEED_OF_LIGHT = 2.99792458e8
THERMAL_NOISE_DBM_HZ = -174.0

DEFAULT_CARRIER_HZ = 300e9
DEFAULT_BANDWIDTH_HZ = 20e9
DEFAULT_GAIN_DBI = 20.0
DEFAULT_NOISE_FIGURE_DB = 10.0
DEFAULT_TX_POWER_DBM = 20.0
DEFAULT_NLOS_LOSS_DB = 15.0
DEFAULT_P_LOS = 0.52

DUAL_POL_FACTOR = 2
PER_POL_CEILING_BPS = 500e9
RATE_CEILING_BPS = PER_POL_CEILING_BPS * DUAL_POL_FACTOR  # 1 Tbps

THZ_BAND_HZ = (0.1e12, 1.0e12)


def free_space_path_loss(distance: float, freq: float) -> float:
    """Friis free-space path loss in dB."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    if freq <= 0:
        raise ValueError("frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance * freq / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class PathLossModel:
    kind: str
    carrier_freq: float
    pl0_db: float
    exponent_n: float
    shadow_sigma_db: float = 0.0
    d0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("free-space", "close-in"):
            raise ValueError(f"unknown path-loss kind {self.kind!r}")
        lo, hi = THZ_BAND_HZ
        if not lo <= self.carrier_freq <= hi:
            raise ValueError("carrier_freq must lie in the 0.1-1 THz band")
        if self.exponent_n <= 0:
            raise ValueError("exponent_n must be positive")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be non-negative")
        if self.d0 != 1.0:
            raise ValueError("reference distance d0 is fixed at 1 m")
        if self.kind == "free-space":
            friis = free_space_path_loss(self.d0, self.carrier_freq)
            if self.exponent_n != 2 or not math.isclose(self.pl0_db, friis, abs_tol=1e-9):
                raise ValueError("free-space model requires n=2 and the Friis intercept")

    @classmethod
    def free_space(cls, carrier_freq: float = DEFAULT_CARRIER_HZ) -> "PathLossModel":
        return cls("free-space", carrier_freq, free_space_path_loss(1.0, carrier_freq), 2.0)

    @classmethod
    def close_in(
        cls,
        carrier_freq: float = DEFAULT_CARRIER_HZ,
        pl0_db: float | None = None,
        exponent_n: float = 2.0,
        shadow_sigma_db: float = 0.0,
    ) -> "PathLossModel":
        if pl0_db is None:
            pl0_db = free_space_path_loss(1.0, carrier_freq)
        return cls("close-in", carrier_freq, pl0_db, exponent_n, shadow_sigma_db)


def path_loss_law(model: PathLossModel, distance: float) -> float:
    """Deterministic distance law, extrapolated below ``d0`` (no shadowing)."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return model.pl0_db + 10.0 * model.exponent_n * math.log10(distance / model.d0)


def path_loss(model: PathLossModel, distance: float, shadow_draw: float | None = None) -> float:
    """Path loss in dB; ``shadow_draw`` is a standard normal deviate."""
    if distance < model.d0:
        raise ValueError(f"distance {distance} m is below the reference distance {model.d0} m")
    pl = path_loss_law(model, distance)
    if shadow_draw is not None:
        pl += model.shadow_sigma_db * shadow_draw
    return pl


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = DEFAULT_TX_POWER_DBM
    tx_gain_dbi: float = DEFAULT_GAIN_DBI
    rx_gain_dbi: float = DEFAULT_GAIN_DBI
    path_loss_db: float = 0.0
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ

    @property
    def rx_power_dbm(self) -> float:
        return self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi - self.path_loss_db

    @property
    def noise_floor_dbm(self) -> float:
        return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def snr_db(self) -> float:
        return self.rx_power_dbm - self.noise_floor_dbm

    def with_path_loss(self, path_loss_db: float) -> "LinkBudget":
        return replace(self, path_loss_db=path_loss_db)

    def report(self, ceiling_bps: float = RATE_CEILING_BPS) -> dict:
        out = asdict(self)
        out["rx_power_dbm"] = self.rx_power_dbm
        out["noise_floor_dbm"] = self.noise_floor_dbm
        out["snr_db"] = self.snr_db
        out["achievable_rate_bps"] = achievable_rate(self, ceiling_bps)
        return out

    def to_json(self, ceiling_bps: float = RATE_CEILING_BPS) -> str:
        return json.dumps(self.report(ceiling_bps), sort_keys=True)


def shannon_rate(snr_db: float, bandwidth_hz: float) -> float:
    return bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def achievable_rate(budget: LinkBudget, ceiling_bps: float = RATE_CEILING_BPS) -> float:
    """Shannon rate of ``budget`` capped at the hardware ceiling, in bit/s."""
    if budget.bandwidth_hz <= 0:
        raise ValueError("bandwidth_hz must be positive")
    return min(shannon_rate(budget.snr_db, budget.bandwidth_hz), ceiling_bps)


def required_snr_db(target_rate: float, bandwidth_hz: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth_hz must be positive")
    if target_rate <= 0:
        return -math.inf
    # expm1 keeps precision for low spectral efficiency
    return 10.0 * math.log10(math.expm1(target_rate / bandwidth_hz * math.log(2.0)))


def required_tx_power(
    target_rate: float,
    template: LinkBudget,
    model: PathLossModel,
    distance: float,
    ceiling_bps: float = RATE_CEILING_BPS,
    *,
    extrapolate: bool = False,
) -> float:
    """Transmit power (dBm) at which ``template`` reaches ``target_rate``.

    ``extrapolate`` lets the path-loss law run below the reference distance;
    the energy model uses it to approach the zero-distance limit.
    """
    if target_rate > ceiling_bps:
        raise ValueError(f"target rate {target_rate:g} exceeds the ceiling {ceiling_bps:g}")
    pl = path_loss_law(model, distance) if extrapolate else path_loss(model, distance)
    snr = required_snr_db(target_rate, template.bandwidth_hz)
    return snr + template.noise_floor_dbm - template.tx_gain_dbi - template.rx_gain_dbi + pl


@dataclass(frozen=True)
class BlockageState:
    state: str
    extra_loss_db: float = 0.0

    def __post_init__(self):
        if self.state not in ("los", "nlos", "blocked"):
            raise ValueError(f"unknown blockage state {self.state!r}")
        if self.state == "nlos" and self.extra_loss_db <= 0:
            raise ValueError("nlos requires a positive extra loss")

    @property
    def carries_traffic(self) -> bool:
        return self.state != "blocked"


LOS = BlockageState("los")


def sample_blockage(p_los: float, nlos_loss_db: float, stream: RngStream) -> BlockageState:
    """Static LoS/NLoS draw; ``blocked`` only arises from dynamic events."""
    if not 0.0 <= p_los <= 1.0:
        raise ValueError("p_los must be a probability")
    if stream.uniform() < p_los:
        return LOS
    return BlockageState("nlos", nlos_loss_db)


def link_rate(
    distance: float,
    blockage: BlockageState,
    model: PathLossModel,
    template: LinkBudget,
    shadow_draw: float | None = None,
    ceiling_bps: float = RATE_CEILING_BPS,
) -> float:
    if blockage.state == "blocked":
        return 0.0
    pl = path_loss(model, max(distance, model.d0), shadow_draw) + blockage.extra_loss_db
    return achievable_rate(template.with_path_loss(pl), ceiling_bps)
