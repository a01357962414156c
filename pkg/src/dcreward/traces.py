"""Request and wind traces: CSV ingestion, synthetic demand, wind power."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .optimizer import RenewableProfile

REQUEST_HEADER = ("slot", "requests")
WIND_HEADER = ("slot", "wind_mps")


class TraceError(ValueError):
    """A trace file or series that cannot be used; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class RawTrace:
    """Contiguous per-slot values, slot 1 first."""

    values: np.ndarray
    kind: str = "requests"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise TraceError("trace must be one-dimensional")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise TraceError("trace values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class TurbineCurve:
    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0
    rated_power: float = 100.0
    turbine_count: int = 1

    def __post_init__(self):
        if not 0 <= self.cut_in < self.rated_speed < self.cut_out:
            raise TraceError("turbine curve needs 0 <= cut_in < rated_speed < cut_out")
        if not self.rated_power > 0:
            raise TraceError("rated power must be positive")
        if int(self.turbine_count) != self.turbine_count or self.turbine_count < 0:
            raise TraceError("turbine count must be a non-negative integer")

    def power(self, speed) -> np.ndarray:
        """Output of one turbine (KW) at each wind speed."""
        v = np.asarray(speed, dtype=float)
        ramp = (v**3 - self.cut_in**3) / (self.rated_speed**3 - self.cut_in**3)
        out = np.where(v >= self.rated_speed, 1.0, ramp) * self.rated_power
        return np.where((v < self.cut_in) | (v >= self.cut_out), 0.0, out)


def _read_rows(path, header: tuple[str, str], kind: str) -> RawTrace:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text.replace("\r\n", "\n")))
    rows = [r for r in reader]
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise TraceError(f"expected header {','.join(header)}", 1)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TraceError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            slot = int(row[0])
            value = float(row[1])
        except ValueError as exc:
            raise TraceError(f"unparseable row {row!r}", lineno) from exc
        if slot != len(values) + 1:
            raise TraceError(f"slot {slot} out of order, expected {len(values) + 1}", lineno)
        if not math.isfinite(value) or value < 0:
            raise TraceError(f"value {row[1]!r} must be finite and non-negative", lineno)
        values.append(value)
    if not values:
        raise TraceError("trace has no data rows")
    return RawTrace(np.array(values), kind)


def load_request_trace(path, scale: float = 1.0, tau: int | None = None) -> np.ndarray:
    """Per-slot request counts from a ``slot,requests`` CSV, multiplied by ``scale``.

    With ``tau`` given, the file must hold at least that many rows; extra
    rows are ignored and short files are rejected.
    """
    if scale < 0:
        raise TraceError("scale must be non-negative")
    raw = _read_rows(path, REQUEST_HEADER, "requests")
    return _fit(raw, tau) * scale


def load_wind_trace(path, tau: int | None = None) -> RawTrace:
    raw = _read_rows(path, WIND_HEADER, "wind")
    return RawTrace(_fit(raw, tau), "wind")


def _fit(raw: RawTrace, tau: int | None) -> np.ndarray:
    if tau is None:
        return raw.values
    if len(raw) < tau:
        raise TraceError(f"trace has {len(raw)} rows, need {tau}")
    return raw.values[:tau]


def export_trace(values, path, kind: str = "requests") -> Path:
    header = REQUEST_HEADER if kind == "requests" else WIND_HEADER
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, v in enumerate(np.asarray(values, dtype=float), start=1):
            fh.write(f"{i},{float(v)!r}\n")
    return path


def synth_diurnal_trace(
    tau: int,
    base: float,
    amplitude: float,
    period: float = 24.0,
    noise_seed: int | None = None,
    noise: float = 0.05,
) -> np.ndarray:
    """Sinusoidal daily load with optional seeded uniform noise.

    Noise is drawn from ``[-noise, noise] * amplitude`` and the result is
    clipped at zero. ``noise_seed=None`` disables noise.
    """
    if not base >= amplitude >= 0:
        raise TraceError("need base >= amplitude >= 0")
    t = np.arange(1, tau + 1)
    lam = base + amplitude * np.sin(2 * np.pi * t / period)
    if noise_seed is not None and noise > 0:
        rng = np.random.default_rng(noise_seed)
        lam = lam + rng.uniform(-noise, noise, tau) * amplitude
    return np.maximum(lam, 0.0)


def synth_wind_speeds(tau: int, mean: float = 7.0, shape: float = 2.0, seed: int | None = 0) -> RawTrace:
    """Seeded Weibull wind speeds (m/s) with the given mean."""
    if not mean > 0 or not shape > 0:
        raise TraceError("mean speed and Weibull shape must be positive")
    rng = np.random.default_rng(seed)
    scale = mean / math.gamma(1 + 1 / shape)
    return RawTrace(scale * rng.weibull(shape, tau), "wind")


def wind_to_power(speeds: RawTrace | np.ndarray, curve: TurbineCurve, T: float = 1.0) -> RenewableProfile:
    """Energy (KWh) produced by the turbine farm in each slot."""
    v = speeds.values if isinstance(speeds, RawTrace) else RawTrace(speeds, "wind").values
    if not T > 0:
        raise TraceError("slot length must be positive")
    return RenewableProfile(curve.turbine_count * curve.power(v) * T)
