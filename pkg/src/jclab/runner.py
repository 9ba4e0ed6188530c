"""End-to-end sweeps: sample, evolve, measure, fit and write results.

Samples are processed in fixed chunks of :data:`EVAL_CHUNK` in index order.
With ``workers > 1`` the chunks are farmed out to a process pool; results
come back in submission order and a single writer appends them to the CSV,
so output files do not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

import numpy as np

from .config import ExperimentConfig, GridConfig, SeriesConfig, TableSpec, cell_label, slug
from .dynamics import FieldTracedEvolution, TimeGrid, default_grid, von_neumann_entropy
from .ensembles import EnsembleDraw, EnsembleSpec, Sampler, draw_ensemble
from .measures import (
    atom_energies,
    atom_energies_pure,
    concurrence,
    entanglement_entropy,
    meyer_wallach_q,
    meyer_wallach_q_pure,
)
from .model import AtomKind, ModelSpec, build_composite_spectrum
from .stats import Records, SweepResult, StatsError, eta_ent_maxent, summarize

__all__ = [
    "EVAL_CHUNK",
    "SweepError",
    "ChunkTask",
    "SeriesOutcome",
    "ExperimentOutcome",
    "resolve_grid",
    "evaluate_chunk",
    "evaluate_states",
    "run_series",
    "run_sweep",
    "run_table",
    "read_records_csv",
    "write_records_csv",
    "stream_id",
]

EVAL_CHUNK = 512
CSV_FIXED = ["sample_id", "ent_measure", "ent_value", "s_in_bits", "s_t_bits", "delta_s_bits", "e_mean"]


class SweepError(RuntimeError):
    """A failure while evaluating a sweep, tagged with the affected samples."""


def stream_id(label: str, family: str = "ensemble") -> int:
    """Stable RNG stream for a series, derived from its label."""
    return zlib.crc32(f"{family}:{label}".encode()) & 0x7FFFFFFF


def resolve_grid(model: ModelSpec, grid: GridConfig) -> TimeGrid:
    span = None if grid.span_over_g is None else grid.span_over_g / model.coupling
    if grid.kind == "single_period":
        return TimeGrid.single_period(model, grid.points or 256)
    if grid.kind == "long_interval":
        return TimeGrid.long_interval(model, grid.points or 4096, span)
    return default_grid(model, grid.points, span)


@lru_cache(maxsize=8)
def _engine(model: ModelSpec, grid: TimeGrid) -> FieldTracedEvolution:
    return FieldTracedEvolution(build_composite_spectrum(model), grid)


@dataclass
class ChunkTask:
    model: ModelSpec
    grid: TimeGrid
    measure: str
    mixed: bool
    start: int
    states: np.ndarray


@dataclass
class ChunkResult:
    start: int
    entanglement: np.ndarray
    s_in: np.ndarray
    s_t: np.ndarray
    e_atoms: np.ndarray | None


def _entanglement(states: np.ndarray, measure: str, model: ModelSpec, mixed: bool) -> np.ndarray:
    n, d = model.n_subsystems, model.atom_dim
    if measure == "meyer_wallach":
        q = meyer_wallach_q(states, n) if mixed else meyer_wallach_q_pure(states, n)
        return np.atleast_1d(q)
    if measure == "entanglement_entropy":
        return np.atleast_1d(entanglement_entropy(states, d))
    if measure == "concurrence":
        rho = states if mixed else np.einsum("si,sj->sij", states, states.conj())
        return np.atleast_1d(concurrence(rho))
    raise ValueError(f"unknown measure {measure!r}")


def evaluate_chunk(task: ChunkTask) -> ChunkResult:
    """Measures at ``t = 0`` and the time-averaged entropy of one chunk."""
    model, states = task.model, task.states
    engine = _engine(model, task.grid)
    ent = _entanglement(states, task.measure, model, task.mixed)
    if task.mixed:
        s_in = np.atleast_1d(von_neumann_entropy(states))
    else:
        s_in = np.zeros(len(states))
    s_t = engine.time_averaged(states, pure=not task.mixed)
    e_atoms = None
    if model.atom_kind is AtomKind.TWO_LEVEL:
        n = model.n_subsystems
        e_atoms = atom_energies(states, n) if task.mixed else atom_energies_pure(states, n)
    return ChunkResult(task.start, ent, s_in, s_t, e_atoms)


def _tasks(model: ModelSpec, grid: TimeGrid, measure: str, mixed: bool, states: np.ndarray) -> Iterator[ChunkTask]:
    for lo in range(0, len(states), EVAL_CHUNK):
        yield ChunkTask(model, grid, measure, mixed, lo, states[lo:lo + EVAL_CHUNK])


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _csv_header(n_energies: int) -> list[str]:
    return CSV_FIXED + [f"e_i_{i}" for i in range(n_energies)]


def _csv_rows(res: ChunkResult, measure: str) -> Iterator[list[str]]:
    for k in range(len(res.s_t)):
        e = None if res.e_atoms is None else res.e_atoms[k]
        yield ([str(res.start + k), measure, _fmt(res.entanglement[k]), _fmt(res.s_in[k]), _fmt(res.s_t[k]),
                _fmt(res.s_t[k] - res.s_in[k]), _fmt(None if e is None else np.mean(e))]
               + ([] if e is None else [_fmt(v) for v in e]))


def evaluate_states(model: ModelSpec, grid: TimeGrid, measure: str, mixed: bool, states: np.ndarray,
                    map_fn: Callable[..., Iterable] = map, csv_path: Path | None = None,
                    label: str = "") -> Records:
    """Evaluate every state, streaming rows to ``csv_path`` in sample order.

    A failing chunk raises :class:`SweepError` naming its sample range; rows of
    the chunks before it are already on disk.
    """
    n_e = model.n_subsystems if model.atom_kind is AtomKind.TWO_LEVEL else 0
    parts: list[ChunkResult] = []
    fh = open(csv_path, "w", newline="") if csv_path is not None else None
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        if writer:
            writer.writerow(_csv_header(n_e))
        tasks = list(_tasks(model, grid, measure, mixed, states))
        results = iter(map_fn(evaluate_chunk, tasks))
        for task in tasks:
            lo = task.start
            try:
                res = next(results)
            except StopIteration:
                raise SweepError(f"{label}: evaluation stopped before sample {lo}") from None
            except Exception as exc:
                hi = lo + len(task.states) - 1
                raise SweepError(f"{label}: samples {lo}..{hi}: {type(exc).__name__}: {exc}") from exc
            parts.append(res)
            if writer:
                writer.writerows(_csv_rows(res, measure))
                fh.flush()
    finally:
        if fh:
            fh.close()
    if not parts:
        raise SweepError(f"{label}: no samples to evaluate")
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    e_atoms = None if parts[0].e_atoms is None else cat("e_atoms")
    return Records(measure, cat("entanglement"), cat("s_in"), cat("s_t"), e_atoms)


def write_records_csv(records: Records, path: Path) -> None:
    n_e = 0 if records.e_atoms is None else records.e_atoms.shape[1]
    res = ChunkResult(0, records.entanglement, records.s_in, records.s_t, records.e_atoms)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_csv_header(n_e))
        w.writerows(_csv_rows(res, records.ent_measure))


def read_records_csv(path: str | os.PathLike) -> Records:
    """Load per-sample records written by a sweep."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[: len(CSV_FIXED)] != CSV_FIXED:
        raise ValueError(f"{path} does not have the sweep CSV header")
    if not rows:
        raise ValueError(f"{path} has no records")
    n_e = len(header) - len(CSV_FIXED)
    col = lambda j: np.array([float(r[j]) for r in rows])
    e_atoms = None
    if n_e:
        e_atoms = np.array([[float(v) for v in r[len(CSV_FIXED):]] for r in rows])
    return Records(rows[0][1], col(2), col(3), col(4), e_atoms, sample_id=np.array([int(r[0]) for r in rows]))


# ---------------------------------------------------------------------------
# series and experiments


@dataclass
class ReferenceOutcome:
    kind: str
    records: Records
    csv: str

    def to_dict(self) -> dict[str, Any]:
        return {"csv": self.csv, "n_samples": len(self.records),
                "mean_s_t": float(np.mean(self.records.s_t)),
                "mean_entanglement": float(np.mean(self.records.entanglement))}


@dataclass
class SeriesOutcome:
    series: SeriesConfig
    result: SweepResult
    draw: EnsembleDraw
    grid: TimeGrid
    csv: str
    references: dict[str, ReferenceOutcome] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = self.result.to_dict()
        s = self.series
        out.update({
            "csv": self.csv,
            "model": {"atom_kind": s.model.atom_kind.value, "n_subsystems": s.model.n_subsystems,
                      "initial_photons": s.model.initial_photons, "coupling": s.model.coupling,
                      "fock_cutoff": s.model.fock_cutoff},
            "sampler": s.ensemble.sampler.value,
            "grid": {"kind": self.grid.kind.value, "points": self.grid.points, "span": self.grid.span},
            "candidates": self.draw.candidates,
            "acceptance_rate": self.draw.acceptance_rate,
        })
        if s.ensemble.constraint is not None:
            c = s.ensemble.constraint
            out["constraint"] = {"kind": c.kind.value, "value": c.value, "tol": c.tol}
        out["fits"] = {name: _fit_block(self.result.records, name) for name in ("s_t", "delta_s")}
        if self.references:
            out["references"] = {k: r.to_dict() for k, r in self.references.items()}
        fit = self.result.fit
        maxent = self.references.get("max_entangled")
        if maxent is not None and fit is not None:
            m = float(np.mean(maxent.records.column(self.result.y_field)))
            try:
                out["eta_ent_maxent"] = eta_ent_maxent(m, fit)
            except StatsError:
                out["eta_ent_maxent"] = None
            out["gap_maxent"] = m - fit.intercept
        sep = self.references.get("separable")
        if sep is not None:
            out["separable_increment_per_subsystem"] = float(np.mean(sep.records.s_t)) / s.model.n_subsystems
        return out


def _fit_block(records: Records, y_field: str) -> dict[str, Any]:
    r = summarize("", records, y_field)
    return {"slope": None if r.fit is None else r.fit.slope, "intercept": r.intercept,
            "slope_angle_deg": r.slope_angle_deg, "pearson_r": r.pearson_r, "eta_ent": r.eta_ent,
            "flat_response": r.flat_response}


@contextmanager
def _mapper(workers: int):
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def run_series(series: SeriesConfig, y_field: str = "s_t", map_fn: Callable[..., Iterable] = map,
               out_dir: Path | None = None, wave: int = 1) -> SeriesOutcome:
    """Draw, evaluate and summarize one series (plus its reference ensembles)."""
    grid = resolve_grid(series.model, series.grid)
    draw = draw_ensemble(series.ensemble, stream_id(series.label), map_fn=map_fn, wave=wave)
    name = slug(series.label)
    csv_name = f"{name}.csv"
    records = evaluate_states(series.model, grid, series.measure, series.ensemble.sampler.mixed, draw.states,
                              map_fn, None if out_dir is None else out_dir / csv_name, series.label)
    refs = {}
    for kind, size, sampler in (("max_entangled", series.max_entangled, Sampler.MAX_ENTANGLED),
                                ("separable", series.separable, Sampler.SEPARABLE_HAAR_PRODUCT)):
        if not size:
            continue
        spec = EnsembleSpec(sampler, size, series.ensemble.seed, None, series.model.atom_dim,
                            series.model.n_subsystems)
        ref_draw = draw_ensemble(spec, stream_id(series.label, kind), map_fn=map_fn, wave=wave)
        ref_csv = f"{name}__{kind}.csv"
        ref_records = evaluate_states(series.model, grid, series.measure, False, ref_draw.states, map_fn,
                                      None if out_dir is None else out_dir / ref_csv, f"{series.label} ({kind})")
        refs[kind] = ReferenceOutcome(kind, ref_records, ref_csv)
    result = summarize(series.label, records, y_field)
    return SeriesOutcome(series, result, draw, grid, csv_name, refs)


@dataclass
class ExperimentOutcome:
    config: ExperimentConfig
    series: list[SeriesOutcome]
    out_dir: Path | None
    wall_clock_s: float = 0.0
    files: list[str] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": self.config.name,
            "config": self.config.to_dict(),
            "y_field": self.config.y_field,
            "series": [s.to_dict() for s in self.series],
            "timing": {"wall_clock_s": self.wall_clock_s},
        }

    def by_label(self, label: str) -> SeriesOutcome:
        for s in self.series:
            if s.series.label == label:
                return s
        raise KeyError(label)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_summary(outcome: ExperimentOutcome, path: Path) -> None:
    path.write_text(json.dumps(outcome.summary(), indent=2, default=_json_default) + "\n")


def run_sweep(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, write: bool = True,
              plot: bool | None = None) -> ExperimentOutcome:
    """Run every series of ``cfg``; write CSVs, ``summary.json`` and ``plot.svg``."""
    t0 = time.perf_counter()
    target = None
    if write:
        target = Path(out_dir) if out_dir is not None else cfg.output_dir()
        target.mkdir(parents=True, exist_ok=True)
    outcomes = []
    with _mapper(cfg.workers) as map_fn:
        for series in cfg.all_series():
            outcomes.append(run_series(series, cfg.y_field, map_fn, target, wave=cfg.workers))
    outcome = ExperimentOutcome(cfg, outcomes, target, time.perf_counter() - t0)
    if target is not None:
        outcome.files = [s.csv for s in outcomes]
        outcome.files += [r.csv for s in outcomes for r in s.references.values()]
        _write_summary(outcome, target / "summary.json")
        outcome.files.append("summary.json")
        if cfg.table is not None:
            write_table(outcome, target)
            outcome.files += ["table.csv", "table_layout.csv"]
        if cfg.outputs.plot if plot is None else plot:
            from .plotting import plot_experiment

            plot_experiment(outcome, target / "plot.svg")
            outcome.files.append("plot.svg")
    return outcome


def run_table(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, write: bool = True,
              plot: bool | None = None) -> ExperimentOutcome:
    if cfg.table is None:
        raise ValueError(f"config {cfg.name!r} has no table block")
    return run_sweep(cfg, out_dir, write, plot)


def table_rows(outcome: ExperimentOutcome) -> list[dict[str, Any]]:
    """Long-form table: one row per (row label, constraint value)."""
    table: TableSpec = outcome.config.table
    out = []
    for row in table.rows:
        for value in table.values:
            s = outcome.by_label(cell_label(row.label, value))
            r = s.result
            out.append({
                "row": row.label,
                "constraint": table.constraint.value,
                "value": value,
                "tol": s.series.ensemble.constraint.tol,
                "n_samples": len(r.records),
                "acceptance_rate": s.draw.acceptance_rate,
                "slope_angle_deg": r.slope_angle_deg,
                "pearson_r": r.pearson_r,
                "eta_ent": r.eta_ent,
            })
    return out


def write_table(outcome: ExperimentOutcome, target: Path) -> None:
    rows = table_rows(outcome)
    with open(target / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    # wide layout: rows = (model row, quantity), columns = constraint values
    table = outcome.config.table
    with open(target / "table_layout.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "quantity"] + [f"{v:g}" for v in table.values])
        for row in table.rows:
            cells = [r for r in rows if r["row"] == row.label]
            for qty, fmt in (("slope_angle_deg", "{:.0f}"), ("pearson_r", "{:.2f}"), ("eta_ent", "{:.2f}")):
                w.writerow([row.label, qty] + ["" if c[qty] is None else fmt.format(c[qty]) for c in cells])
