"""Directional channel-sounding data: power-angle-delay profiles (PADPs).

A PADP file holds one receiver position. Rows are grid cells of a
directional scan (azimuth 0-355 deg and zenith -20..20 deg, both in 5 deg
steps) at a given excess delay. The receiver distance travels in the file
name as a ``_d<meters>m`` token, e.g. ``rx007_d12.5m.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from .channel import PathLossModel, free_space_path_loss, path_loss
from .simcore import RngStream

HEADER = ("azimuth_deg", "zenith_deg", "delay_ns", "power_dbm")
ANGLE_STEP_DEG = 5
AZIMUTH_BINS = 72
ZENITH_BINS = 9
ZENITH_RANGE = (-20, 20)

DEFAULT_NOISE_FLOOR_DBM = -120.0
DEFAULT_THRESHOLD_DB = 6.0
# 20 GHz sweep span (290-310 GHz) -> 1/20 GHz delay bins
DEFAULT_DELAY_RESOLUTION_NS = 0.05
DEFAULT_REFERENCE_DBM = 40.0
SIDELOBE_REL_DB = -10.0

_DISTANCE_RE = re.compile(r"_d(\d+(?:\.\d+)?(?:e[-+]?\d+)?)m\.csv$")


class PadpFormatError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class PadpRecord:
    azimuth_deg: float
    zenith_deg: float
    delay_ns: float
    power_dbm: float


@dataclass(frozen=True)
class Mpc:
    delay_ns: float
    azimuth_deg: float
    zenith_deg: float
    power_dbm: float


def _on_grid(angle: float, lo: float, hi: float) -> bool:
    return lo <= angle <= hi and float(angle) % ANGLE_STEP_DEG == 0


def _check_record(rec: PadpRecord, where: str) -> None:
    if not _on_grid(rec.azimuth_deg, 0, 355):
        raise PadpFormatError(f"{where}: azimuth {rec.azimuth_deg:g} is off the 5-degree grid")
    if not _on_grid(rec.zenith_deg, *ZENITH_RANGE):
        raise PadpFormatError(f"{where}: zenith {rec.zenith_deg:g} is off the 5-degree grid")
    if rec.delay_ns < 0:
        raise PadpFormatError(f"{where}: negative delay {rec.delay_ns:g}")
    if not math.isfinite(rec.power_dbm):
        raise PadpFormatError(f"{where}: non-finite power")


def parse_padp_text(text: str, source: str = "<padp>") -> list[PadpRecord]:
    if not text.strip():
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    if tuple(lines[0].rstrip("\r").split(",")) != HEADER:
        raise PadpFormatError(f"{source}:1: expected header {','.join(HEADER)}")
    records = []
    seen: set[tuple[float, float, float]] = set()
    per_delay: dict[float, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"{source}:{lineno}"
        fields = line.split(",")
        if len(fields) != 4:
            raise PadpFormatError(f"{where}: expected 4 fields, got {len(fields)}")
        try:
            rec = PadpRecord(*(float(f) for f in fields))
        except ValueError:
            raise PadpFormatError(f"{where}: malformed row {line!r}") from None
        _check_record(rec, where)
        cell = (rec.azimuth_deg, rec.zenith_deg, rec.delay_ns)
        if cell in seen:
            raise PadpFormatError(f"{where}: duplicate cell {cell}")
        seen.add(cell)
        per_delay[rec.delay_ns] = per_delay.get(rec.delay_ns, 0) + 1
        records.append(rec)
    if any(c > AZIMUTH_BINS * ZENITH_BINS for c in per_delay.values()):
        raise PadpFormatError(f"{source}: more cells per delay than the angular grid holds")
    return records


def parse_padp(path: str | FsPath) -> list[PadpRecord]:
    path = FsPath(path)
    return parse_padp_text(path.read_text(encoding="utf-8"), str(path))


def serialize_padp(records: Iterable[PadpRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow((repr(float(r.azimuth_deg)), repr(float(r.zenith_deg)),
                    repr(float(r.delay_ns)), repr(float(r.power_dbm))))
    return buf.getvalue()


def distance_from_name(path: str | FsPath) -> float:
    m = _DISTANCE_RE.search(FsPath(path).name)
    if not m:
        raise PadpFormatError(f"{path}: file name carries no _d<meters>m distance token")
    return float(m.group(1))


# --- multipath extraction ---------------------------------------------------

def _cell(rec: PadpRecord, res: float) -> tuple[int, int, int]:
    return (int(round(rec.azimuth_deg / ANGLE_STEP_DEG)) % AZIMUTH_BINS,
            int(round((rec.zenith_deg - ZENITH_RANGE[0]) / ANGLE_STEP_DEG)),
            int(round(rec.delay_ns / res)))


def extract_mpcs(
    records: Sequence[PadpRecord],
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM,
    threshold_db: float = DEFAULT_THRESHOLD_DB,
    delay_resolution_ns: float = DEFAULT_DELAY_RESOLUTION_NS,
) -> list[Mpc]:
    """Local maxima of the (azimuth, zenith, delay) grid above floor + threshold.

    Azimuth wraps around; cells missing from the file count as empty. On a
    plateau only the cell with the lowest grid index is reported.
    """
    if threshold_db <= 0:
        raise ValueError("threshold_db must be positive")
    grid = {}
    for rec in records:
        grid[_cell(rec, delay_resolution_ns)] = rec
    cutoff = noise_floor_dbm + threshold_db
    out = []
    for cell, rec in grid.items():
        if rec.power_dbm <= cutoff:
            continue
        az, ze, de = cell
        peak = True
        for da in (-1, 0, 1):
            for dz in (-1, 0, 1):
                for dd in (-1, 0, 1):
                    if da == dz == dd == 0:
                        continue
                    nb = ((az + da) % AZIMUTH_BINS, ze + dz, de + dd)
                    other = grid.get(nb)
                    if other is None:
                        continue
                    if other.power_dbm > rec.power_dbm or (other.power_dbm == rec.power_dbm and nb < cell):
                        peak = False
                        break
                if not peak:
                    break
            if not peak:
                break
        if peak:
            out.append(Mpc(rec.delay_ns, rec.azimuth_deg, rec.zenith_deg, rec.power_dbm))
    out.sort(key=lambda m: (-m.power_dbm, m.delay_ns, m.azimuth_deg, m.zenith_deg))
    return out


def total_received_dbm(records: Iterable[PadpRecord], noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM) -> float:
    """Power summed over every cell strictly above the noise floor."""
    mw = sum(10.0 ** (r.power_dbm / 10.0) for r in records if r.power_dbm > noise_floor_dbm)
    if mw <= 0:
        raise PadpFormatError("no cell above the noise floor")
    return 10.0 * math.log10(mw)


def padp_path_loss(records: Iterable[PadpRecord], reference_dbm: float = DEFAULT_REFERENCE_DBM,
                   noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM) -> float:
    """Omnidirectional path loss: de-embedded reference power minus total received power."""
    return reference_dbm - total_received_dbm(records, noise_floor_dbm)


# --- close-in fit -------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    pl0_db: float
    exponent_n: float
    shadow_sigma_db: float
    residuals: tuple[float, ...]
    point_count: int
    anchored: bool = False

    def to_dict(self) -> dict:
        return {"pl0_db": self.pl0_db, "n": self.exponent_n,
                "sigma_db": self.shadow_sigma_db, "points": self.point_count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def model(self, carrier_freq: float) -> PathLossModel:
        return PathLossModel.close_in(carrier_freq, self.pl0_db, self.exponent_n, self.shadow_sigma_db)


def fit_close_in(
    points: Sequence[tuple[float, float]],
    d0: float = 1.0,
    anchor_pl0_db: float | None = None,
) -> FitResult:
    """Least-squares close-in fit of ``(distance_m, path_loss_db)`` points.

    With ``anchor_pl0_db`` the intercept is held fixed (typically the Friis
    value at ``d0``) and only the exponent is fitted.
    """
    d = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if len(np.unique(d)) < 2:
        raise FitError("degenerate fit: need at least two distinct distances")
    if np.any(d <= 0):
        raise FitError("distances must be positive")
    x = 10.0 * np.log10(d / d0)
    if anchor_pl0_db is None:
        A = np.column_stack([np.ones_like(x), x])
        (pl0, n), *_ = np.linalg.lstsq(A, y, rcond=None)
    else:
        pl0 = anchor_pl0_db
        n = float(np.dot(x, y - pl0) / np.dot(x, x))
    resid = y - (pl0 + n * x)
    if n <= 0:
        raise FitError(f"fitted exponent {n:.3f} is not positive")
    return FitResult(float(pl0), float(n), float(np.std(resid)), tuple(float(r) for r in resid),
                     len(points), anchor_pl0_db is not None)


def friis_anchor(carrier_freq: float, d0: float = 1.0) -> float:
    return free_space_path_loss(d0, carrier_freq)


# --- synthetic measurements ---------------------------------------------------

def _check_truth_mpc(m: Mpc, res: float) -> None:
    where = f"truth MPC at ({m.azimuth_deg}, {m.zenith_deg}, {m.delay_ns})"
    if not _on_grid(m.azimuth_deg, 0, 355) or not _on_grid(m.zenith_deg, *ZENITH_RANGE):
        raise ValueError(f"{where} is off the angular grid")
    if m.delay_ns < 0 or not math.isclose(m.delay_ns / res, round(m.delay_ns / res), abs_tol=1e-9):
        raise ValueError(f"{where} is off the {res} ns delay grid")


def generate_synthetic_padp(
    truth: PathLossModel,
    mpcs: Sequence[Mpc],
    distance: float,
    seed: int,
    *,
    stream_id: str = "padp",
    reference_dbm: float = DEFAULT_REFERENCE_DBM,
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM,
    noise_cells: int = 16,
    delay_resolution_ns: float = DEFAULT_DELAY_RESOLUTION_NS,
) -> str:
    """PADP file text for one receiver position.

    Each truth MPC (``power_dbm`` read as a relative level) becomes a peak
    cell with two weaker azimuth sidelobes. Signal cells are scaled so their
    total equals ``reference_dbm`` minus the truth path loss, shadowing
    included. Noise cells sit at or below the floor and never count.
    """
    if not mpcs:
        raise ValueError("need at least one truth MPC")
    for m in mpcs:
        _check_truth_mpc(m, delay_resolution_ns)
    rng = RngStream(seed, stream_id)
    shadow = rng.normal() if truth.shadow_sigma_db > 0 else None
    pl = path_loss(truth, distance, shadow)
    total_mw = 10.0 ** ((reference_dbm - pl) / 10.0)

    side = 10.0 ** (SIDELOBE_REL_DB / 10.0)
    cells: dict[tuple[float, float, float], float] = {}
    for m in mpcs:
        level = 10.0 ** (m.power_dbm / 10.0)
        cells[(m.azimuth_deg, m.zenith_deg, m.delay_ns)] = cells.get((m.azimuth_deg, m.zenith_deg, m.delay_ns), 0.0) + level
        for da in (-ANGLE_STEP_DEG, ANGLE_STEP_DEG):
            c = ((m.azimuth_deg + da) % 360, m.zenith_deg, m.delay_ns)
            cells[c] = cells.get(c, 0.0) + level * side
    scale = total_mw / sum(cells.values())

    records = [PadpRecord(float(a), float(z), float(dl), 10.0 * math.log10(v * scale))
               for (a, z, dl), v in cells.items()]
    max_delay_bin = int(round(max(m.delay_ns for m in mpcs) / delay_resolution_ns)) + 4
    taken = set(cells)
    while noise_cells > 0:
        cell = (float(ANGLE_STEP_DEG * rng.choice(AZIMUTH_BINS)),
                float(ZENITH_RANGE[0] + ANGLE_STEP_DEG * rng.choice(ZENITH_BINS)),
                round(rng.choice(max_delay_bin + 1) * delay_resolution_ns, 10))
        level = noise_floor_dbm - 3.0 * rng.uniform()
        if cell in taken:
            continue
        taken.add(cell)
        records.append(PadpRecord(*cell, level))
        noise_cells -= 1
    records.sort(key=lambda r: (r.delay_ns, r.azimuth_deg, r.zenith_deg))
    return serialize_padp(records)


def generate_campaign(
    truth: PathLossModel,
    mpcs: Sequence[Mpc],
    distances: Sequence[float],
    seed: int,
    directory: str | FsPath | None = None,
    **kwargs,
) -> list[tuple[float, str]]:
    """One synthetic file per distance; optionally written to ``directory``."""
    out = []
    for i, d in enumerate(distances):
        text = generate_synthetic_padp(truth, mpcs, d, seed, stream_id=f"padp/{i}", **kwargs)
        out.append((float(d), text))
        if directory is not None:
            target = FsPath(directory) / f"rx{i:03d}_d{float(d)!r}m.csv"
            target.write_text(text, encoding="utf-8", newline="\n")
    return out


def fit_campaign(
    files: Iterable[tuple[float, str]],
    *,
    reference_dbm: float = DEFAULT_REFERENCE_DBM,
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM,
    anchor_pl0_db: float | None = None,
) -> FitResult:
    points = [(d, padp_path_loss(parse_padp_text(text), reference_dbm, noise_floor_dbm))
              for d, text in files]
    return fit_close_in(points, anchor_pl0_db=anchor_pl0_db)
