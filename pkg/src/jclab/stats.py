"""Fitting lines, correlations and entanglement fractions of sweep records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

__all__ = [
    "StatsError",
    "SampleRecord",
    "Records",
    "LineFit",
    "BinMean",
    "SweepResult",
    "fit_line",
    "pearson",
    "eta_ent",
    "eta_ent_maxent",
    "bin_average",
    "summarize",
]


class StatsError(ValueError):
    """Degenerate input for a statistic."""


@dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    ent_measure: str
    entanglement: float
    s_in: float
    s_t: float
    delta_s: float
    e_mean: float | None = None
    e_atoms: tuple[float, ...] | None = None


@dataclass
class Records:
    """Column-oriented sample records of one ensemble."""

    ent_measure: str
    entanglement: np.ndarray
    s_in: np.ndarray
    s_t: np.ndarray
    e_atoms: np.ndarray | None = None  # (S, N) or None for qutrits
    sample_id: np.ndarray | None = None

    def __post_init__(self):
        self.entanglement = np.asarray(self.entanglement, dtype=float)
        self.s_in = np.asarray(self.s_in, dtype=float)
        self.s_t = np.asarray(self.s_t, dtype=float)
        if self.sample_id is None:
            self.sample_id = np.arange(len(self.s_t))
        n = len(self.s_t)
        if not (len(self.entanglement) == len(self.s_in) == n):
            raise ValueError("record columns differ in length")

    def __len__(self) -> int:
        return len(self.s_t)

    @property
    def delta_s(self) -> np.ndarray:
        return self.s_t - self.s_in

    @property
    def e_mean(self) -> np.ndarray | None:
        return None if self.e_atoms is None else self.e_atoms.mean(axis=1)

    def column(self, name: str) -> np.ndarray:
        aliases = {"ent_value": "entanglement", "s_in_bits": "s_in", "s_t_bits": "s_t",
                   "delta_s_bits": "delta_s"}
        value = getattr(self, aliases.get(name, name))
        if value is None:
            raise KeyError(f"column {name!r} is empty for these records")
        return value

    def rows(self):
        e_mean = self.e_mean
        for k in range(len(self)):
            yield SampleRecord(
                sample_id=int(self.sample_id[k]),
                ent_measure=self.ent_measure,
                entanglement=float(self.entanglement[k]),
                s_in=float(self.s_in[k]),
                s_t=float(self.s_t[k]),
                delta_s=float(self.s_t[k] - self.s_in[k]),
                e_mean=None if e_mean is None else float(e_mean[k]),
                e_atoms=None if self.e_atoms is None else tuple(float(v) for v in self.e_atoms[k]),
            )


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float

    @property
    def slope_angle_deg(self) -> float:
        """Angle of the line with ``x`` and ``y`` drawn on the same scale."""
        return math.degrees(math.atan(self.slope))

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x)


def _xy(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError("x and y must be 1-D arrays of equal length")
    if len(x) < 2:
        raise StatsError("need at least two samples")
    return x, y


def fit_line(x, y) -> LineFit:
    """Ordinary least squares over all points."""
    x, y = _xy(x, y)
    dx = x - x.mean()
    sxx = np.dot(dx, dx)
    if not sxx > 0:
        raise StatsError("x has zero variance; the fitting line is undefined")
    slope = float(np.dot(dx, y - y.mean()) / sxx)
    return LineFit(slope, float(y.mean() - slope * x.mean()))


def pearson(x, y) -> float:
    x, y = _xy(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if not (sxx > 0 and syy > 0):
        raise StatsError("Pearson correlation is undefined for a constant variable")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r))


def eta_ent(y, fit: LineFit) -> float:
    """Fraction of the mean response above the fitted value at zero entanglement."""
    mean = float(np.mean(y))
    if not mean > 0:
        raise StatsError("mean entropy must be positive")
    return (mean - fit.intercept) / mean


def eta_ent_maxent(maxent_mean: float, fit: LineFit) -> float:
    """Same fraction with the maximally entangled ensemble mean in place of the sample mean."""
    if not maxent_mean > 0:
        raise StatsError("mean entropy must be positive")
    return (maxent_mean - fit.intercept) / maxent_mean


@dataclass(frozen=True)
class BinMean:
    center: float
    mean: float
    count: int


def bin_average(x, y, width: float = 0.1) -> list[BinMean]:
    """Mean of ``y`` over half-open bins ``[k w, (k+1) w)``; empty bins are omitted."""
    if not width > 0:
        raise ValueError("bin width must be positive")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size == 0:
        return []
    k = np.floor(x / width).astype(np.int64)
    keys, inverse, counts = np.unique(k, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=y)
    return [BinMean((int(key) + 0.5) * width, float(s / c), int(c)) for key, s, c in zip(keys, sums, counts)]


@dataclass
class SweepResult:
    """Records of one ensemble plus the statistics derived from them."""

    label: str
    records: Records
    y_field: str
    fit: LineFit | None
    pearson_r: float | None
    eta_ent: float | None
    bins: list[BinMean]
    flat_response: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def slope_angle_deg(self) -> float | None:
        return None if self.fit is None else self.fit.slope_angle_deg

    @property
    def intercept(self) -> float | None:
        return None if self.fit is None else self.fit.intercept

    def to_dict(self) -> dict[str, Any]:
        y = self.records.column(self.y_field)
        out = {
            "label": self.label,
            "n_samples": len(self.records),
            "ent_measure": self.records.ent_measure,
            "y_field": self.y_field,
            "slope": None if self.fit is None else self.fit.slope,
            "intercept": self.intercept,
            "slope_angle_deg": self.slope_angle_deg,
            "pearson_r": self.pearson_r,
            "eta_ent": self.eta_ent,
            "flat_response": self.flat_response,
            "means": {
                "s_t": float(np.mean(self.records.s_t)),
                "s_in": float(np.mean(self.records.s_in)),
                "delta_s": float(np.mean(self.records.delta_s)),
                "entanglement": float(np.mean(self.records.entanglement)),
                "y": float(np.mean(y)),
            },
            "bins": [asdict(b) for b in self.bins],
        }
        out.update(self.metadata)
        return out


FLAT_TOL = 1e-8


def summarize(label: str, records: Records, y_field: str = "s_t", bin_width: float = 0.1,
              metadata: dict[str, Any] | None = None) -> SweepResult:
    """Fit, correlate and bin ``y_field`` against entanglement.

    A response whose range is below ``1e-8`` bits is flagged flat: the fit is
    reported with zero slope through the mean and no Pearson coefficient.
    """
    x, y = records.entanglement, records.column(y_field)
    flat = bool(len(y) and np.ptp(y) < FLAT_TOL)
    fit = r = eta = None
    if flat:
        fit = LineFit(0.0, float(np.mean(y)))
        eta = 0.0 if np.mean(y) > 0 else None
    elif len(x) >= 2 and np.ptp(x) > 0:
        fit = fit_line(x, y)
        r = pearson(x, y)
        if np.mean(y) > 0:
            eta = eta_ent(y, fit)
    return SweepResult(label, records, y_field, fit, r, eta, bin_average(x, y, bin_width), flat,
                       dict(metadata or {}))
