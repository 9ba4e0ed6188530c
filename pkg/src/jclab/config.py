"""Experiment configuration files.

Configs are YAML documents.  A config names an experiment, a seed and a
list of *series*; each series is one ensemble evaluated on one model.  A
``table`` block expands into one series per (row, constraint value).

.. code-block:: yaml

    name: fig1a
    seed: 1
    series:
      - label: 2-JC
        model: {atom_kind: two_level, n_subsystems: 2, initial_photons: 0}
        ensemble: {sampler: haar_pure, size: 100000}
        measure: meyer_wallach
"""

from __future__ import annotations

import dataclasses
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .ensembles import Constraint, ConstraintKind, EnsembleSpec, Sampler, default_tolerance
from .measures import MEASURES
from .model import AtomKind, ModelSpec

__all__ = [
    "ConfigError",
    "GridConfig",
    "SeriesConfig",
    "TableRow",
    "TableSpec",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "dump_config",
    "OUTPUT_DIR_ENV",
]

OUTPUT_DIR_ENV = "JCLAB_OUTPUT_DIR"
Y_FIELDS = ("s_t", "delta_s")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def slug(text: str) -> str:
    """File-name stem for a series label; keeps signs and decimal points."""
    return re.sub(r"[^a-z0-9.+-]+", "_", text.lower()).strip("_.") or "series"


@dataclass(frozen=True)
class GridConfig:
    """``kind='auto'`` picks a single period for two-level atoms at ``n=0``."""

    kind: str = "auto"
    points: int | None = None
    span_over_g: float | None = None

    def __post_init__(self):
        if self.kind not in ("auto", "single_period", "long_interval"):
            raise ConfigError(f"unknown grid kind {self.kind!r}")


@dataclass(frozen=True)
class SeriesConfig:
    label: str
    model: ModelSpec
    ensemble: EnsembleSpec
    measure: str
    grid: GridConfig = GridConfig()
    max_entangled: int = 0
    separable: int = 0
    color: str | None = None

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown measure {self.measure!r}; choose from {MEASURES}")
        if self.measure == "meyer_wallach" and self.model.atom_dim != 2:
            raise ConfigError("the Meyer-Wallach measure needs two-level atoms")
        if self.measure in ("entanglement_entropy", "concurrence") and self.model.n_subsystems != 2:
            raise ConfigError(f"{self.measure} is defined for two subsystems")
        if self.measure == "entanglement_entropy" and self.ensemble.sampler.mixed:
            raise ConfigError("entanglement entropy needs pure states")
        if self.measure == "concurrence" and self.model.atom_dim != 2:
            raise ConfigError("concurrence needs two qubits")
        if (self.ensemble.atom_dim, self.ensemble.n_subsystems) != (self.model.atom_dim, self.model.n_subsystems):
            raise ConfigError(f"series {self.label!r}: ensemble and model disagree on the atomic space")


@dataclass(frozen=True)
class TableRow:
    label: str
    model: ModelSpec
    ensemble: EnsembleSpec
    measure: str
    tolerances: tuple[float, ...] | None = None


@dataclass(frozen=True)
class TableSpec:
    constraint: ConstraintKind
    values: tuple[float, ...]
    rows: tuple[TableRow, ...]

    def expand(self) -> list[SeriesConfig]:
        out = []
        for row in self.rows:
            tols = row.tolerances or tuple(
                default_tolerance(self.constraint, row.model.n_subsystems, v) for v in self.values)
            if len(tols) != len(self.values):
                raise ConfigError(f"table row {row.label!r}: {len(tols)} tolerances for {len(self.values)} values")
            for value, tol in zip(self.values, tols):
                ens = dataclasses.replace(row.ensemble, constraint=Constraint(self.constraint, value, tol))
                out.append(SeriesConfig(cell_label(row.label, value), row.model, ens, row.measure))
        return out


def cell_label(row: str, value: float) -> str:
    return f"{row} @ {value:g}"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    plot: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    series: tuple[SeriesConfig, ...] = ()
    table: TableSpec | None = None
    seed: int = 0
    workers: int = 1
    y_field: str = "s_t"
    mark_means: bool = False
    description: str = ""
    outputs: OutputConfig = OutputConfig()

    def __post_init__(self):
        if self.y_field not in Y_FIELDS:
            raise ConfigError(f"y_field must be one of {Y_FIELDS}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        labels = [s.label for s in self.all_series()]
        if len(set(map(slug, labels))) != len(labels):
            raise ConfigError("series labels must be unique (after slugging)")
        if not labels:
            raise ConfigError("an experiment needs at least one series")

    def all_series(self) -> list[SeriesConfig]:
        return list(self.series) + (self.table.expand() if self.table else [])

    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_DIR_ENV)
        return Path(root) / self.name if root else Path(self.outputs.directory)

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       scale: float | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            reseed = lambda e: dataclasses.replace(e, seed=seed)
            series = tuple(dataclasses.replace(s, ensemble=reseed(s.ensemble)) for s in cfg.series)
            table = cfg.table
            if table is not None:
                table = dataclasses.replace(table, rows=tuple(
                    dataclasses.replace(r, ensemble=reseed(r.ensemble)) for r in table.rows))
            cfg = dataclasses.replace(cfg, seed=seed, series=series, table=table)
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=workers)
        if scale is not None and scale != 1:
            if not scale > 0:
                raise ConfigError("scale must be positive")
            cfg = cfg.scaled(scale)
        return cfg

    def scaled(self, scale: float) -> "ExperimentConfig":
        """Divide every ensemble size (and reference size) by ``scale``."""

        def shrink(n: int) -> int:
            return 0 if n == 0 else max(2, math.ceil(n / scale))

        series = tuple(dataclasses.replace(
            s, ensemble=dataclasses.replace(s.ensemble, size=shrink(s.ensemble.size)),
            max_entangled=shrink(s.max_entangled), separable=shrink(s.separable)) for s in self.series)
        table = self.table
        if table is not None:
            rows = tuple(dataclasses.replace(r, ensemble=dataclasses.replace(
                r.ensemble, size=shrink(r.ensemble.size))) for r in table.rows)
            table = dataclasses.replace(table, rows=rows)
        return dataclasses.replace(self, series=series, table=table)

    # ---- serialization -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "seed": self.seed,
            "workers": self.workers,
            "y_field": self.y_field,
            "mark_means": self.mark_means,
            "outputs": dataclasses.asdict(self.outputs),
            "series": [_series_to_dict(s) for s in self.series],
        }
        if self.table is not None:
            out["table"] = {
                "constraint": self.table.constraint.value,
                "values": list(self.table.values),
                "rows": [_row_to_dict(r) for r in self.table.rows],
            }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        try:
            data = dict(data)
            seed = int(data.get("seed", 0))
            series = tuple(_series_from_dict(s, seed) for s in data.get("series") or [])
            table = None
            if data.get("table"):
                t = data["table"]
                table = TableSpec(
                    constraint=ConstraintKind(t["constraint"]),
                    values=tuple(float(v) for v in t["values"]),
                    rows=tuple(_row_from_dict(r, seed) for r in t["rows"]),
                )
            return cls(
                name=str(data["name"]),
                description=str(data.get("description", "")),
                series=series,
                table=table,
                seed=seed,
                workers=int(data.get("workers", 1)),
                y_field=str(data.get("y_field", "s_t")),
                mark_means=bool(data.get("mark_means", False)),
                outputs=OutputConfig(**(data.get("outputs") or {})),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def _model_to_dict(m: ModelSpec) -> dict[str, Any]:
    d = dataclasses.asdict(m)
    d["atom_kind"] = m.atom_kind.value
    return d


def _model_from_dict(d: dict[str, Any]) -> ModelSpec:
    d = dict(d)
    kind = AtomKind(d.pop("atom_kind", "two_level"))
    if "detuning_ratio" in d:
        if kind is not AtomKind.TWO_LEVEL:
            raise ConfigError("detuning_ratio is only meaningful for two-level atoms")
        return ModelSpec.two_level(**d)
    return ModelSpec(atom_kind=kind, **d)


def _ensemble_to_dict(e: EnsembleSpec) -> dict[str, Any]:
    d = {"sampler": e.sampler.value, "size": e.size}
    if e.constraint is not None:
        d["constraint"] = {"kind": e.constraint.kind.value, "value": e.constraint.value, "tol": e.constraint.tol}
    return d


def _ensemble_from_dict(d: dict[str, Any], model: ModelSpec, seed: int) -> EnsembleSpec:
    d = dict(d)
    c = d.pop("constraint", None)
    constraint = None
    if c is not None:
        kind = ConstraintKind(c["kind"])
        tol = c.get("tol")
        if tol is None:
            tol = default_tolerance(kind, model.n_subsystems, float(c["value"]))
        constraint = Constraint(kind, float(c["value"]), float(tol))
    return EnsembleSpec(sampler=Sampler(d.pop("sampler", "haar_pure")), size=int(d.pop("size")),
                        seed=seed, constraint=constraint, atom_dim=model.atom_dim,
                        n_subsystems=model.n_subsystems, **d)


def _default_measure(model: ModelSpec, sampler: Sampler) -> str:
    if sampler.mixed:
        return "concurrence"
    if model.atom_dim == 3:
        return "entanglement_entropy"
    return "meyer_wallach"


def _series_to_dict(s: SeriesConfig) -> dict[str, Any]:
    d: dict[str, Any] = {
        "label": s.label,
        "model": _model_to_dict(s.model),
        "ensemble": _ensemble_to_dict(s.ensemble),
        "measure": s.measure,
        "grid": dataclasses.asdict(s.grid),
    }
    if s.max_entangled:
        d["max_entangled"] = s.max_entangled
    if s.separable:
        d["separable"] = s.separable
    if s.color:
        d["color"] = s.color
    return d


def _series_from_dict(d: dict[str, Any], seed: int) -> SeriesConfig:
    model = _model_from_dict(d.get("model") or {})
    ens = _ensemble_from_dict(d["ensemble"], model, seed)
    return SeriesConfig(
        label=str(d["label"]),
        model=model,
        ensemble=ens,
        measure=str(d.get("measure") or _default_measure(model, ens.sampler)),
        grid=GridConfig(**(d.get("grid") or {})),
        max_entangled=int(d.get("max_entangled", 0)),
        separable=int(d.get("separable", 0)),
        color=d.get("color"),
    )


def _row_to_dict(r: TableRow) -> dict[str, Any]:
    d = {"label": r.label, "model": _model_to_dict(r.model), "ensemble": _ensemble_to_dict(r.ensemble),
         "measure": r.measure}
    if r.tolerances is not None:
        d["tolerances"] = list(r.tolerances)
    return d


def _row_from_dict(d: dict[str, Any], seed: int) -> TableRow:
    model = _model_from_dict(d.get("model") or {})
    ens = _ensemble_from_dict(d["ensemble"], model, seed)
    tols = d.get("tolerances")
    return TableRow(str(d["label"]), model, ens, str(d.get("measure") or _default_measure(model, ens.sampler)),
                    None if tols is None else tuple(float(t) for t in tols))


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
