"""Invariant and oracle checks runnable outside the test suite.

``run_checks("fast")`` exercises the dynamics, measures and samplers at small
sizes (ensembles capped at 1000 states).  ``"full"`` adds every acceptance
criterion.  Each check is seeded; failures report the seed that reproduces
them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats
from scipy.linalg import expm

from . import dynamics
from .dynamics import FieldTracedEvolution, QuantumState, TimeGrid, default_grid, von_neumann_entropy
from .ensembles import (
    block_rng,
    sample_ginibre_mixed,
    sample_haar_pure,
    sample_single_excitation,
)
from .measures import (
    concurrence,
    entanglement_entropy,
    meyer_wallach_q_pure,
)
from .model import ModelSpec, build_composite_spectrum

__all__ = ["CheckResult", "CHECKS", "run_checks", "format_report"]

FAST_CAP = 1000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seed: int
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = "" if self.passed else f" (reproduce with seed={self.seed})"
        return f"[{tag}] {self.name}: {self.detail}{extra}"


def _rng(seed: int) -> np.random.Generator:
    return block_rng(seed, 0x5EED, 0)


def check_single_excitation_invariance(seed: int = 11, size: int = 200) -> tuple[bool, str]:
    """Time-averaged entropy of single-excitation states does not depend on the amplitudes."""
    worst_spread = worst_pop = 0.0
    for n_atoms in (2, 3):
        spec = ModelSpec.two_level(n_atoms)
        engine = FieldTracedEvolution(build_composite_spectrum(spec), default_grid(spec))
        states = sample_single_excitation(n_atoms, _rng(seed + n_atoms), size)
        s_t = engine.time_averaged_pure(states)
        worst_spread = max(worst_spread, float(np.ptp(s_t)))
        rho_t = engine.atomic_states_pure(states[:20])
        excit = np.array([bin(j).count("1") for j in range(2 ** n_atoms)])
        pops = np.abs(np.diagonal(rho_t, axis1=-2, axis2=-1)[..., excit >= 2])
        worst_pop = max(worst_pop, float(pops.max()))
    ok = worst_spread < 1e-8 and worst_pop < 1e-12
    return ok, f"S_t spread {worst_spread:.2e} (<1e-8), doubly excited population {worst_pop:.2e} (<1e-12)"


def _random_composite_state(spec: ModelSpec, rng: np.random.Generator, mixed: bool):
    if mixed:
        return QuantumState(sample_ginibre_mixed(spec.dim, rng), spec)
    return QuantumState(sample_haar_pure(spec.dim, rng), spec)


def check_eigenbasis_vs_expm(seed: int = 12) -> tuple[bool, str]:
    """Eigenbasis evolution against ``expm(-iHt)`` on composite spaces of dimension <= 64."""
    rng = _rng(seed)
    worst = 0.0
    specs = [ModelSpec.two_level(2), ModelSpec.two_level(2, 1), ModelSpec.two_level(3),
             ModelSpec.three_level(1, 1), ModelSpec.two_level(1, 2)]
    for spec in specs:
        spectral = build_composite_spectrum(spec)
        h = spectral.hamiltonian()
        for t in (0.37, 5.1, 61.0):
            u = expm(-1j * t * h)
            psi = _random_composite_state(spec, rng, False)
            rho = _random_composite_state(spec, rng, True)
            worst = max(worst, np.abs(dynamics.evolve_pure(spectral, psi, t).data - u @ psi.data).max())
            ref = u @ rho.data @ u.conj().T
            worst = max(worst, np.abs(dynamics.evolve_density(spectral, rho, t).data - ref).max())
    return worst < 1e-8, f"max deviation {worst:.2e} (<1e-8)"


def check_pure_mixed_consistency(seed: int = 13) -> tuple[bool, str]:
    """Pure and density-matrix routes agree, entry by entry and in time-averaged entropy."""
    rng = _rng(seed)
    worst_state = worst_entropy = 0.0
    for spec in (ModelSpec.two_level(2), ModelSpec.two_level(2, 1), ModelSpec.three_level(2, 1)):
        spectral = build_composite_spectrum(spec)
        grid = TimeGrid.long_interval(spec, points=16)
        atoms = sample_haar_pure(spec.atoms_dim, rng, 3)
        engine = FieldTracedEvolution(spectral, grid, fold=False)
        by_pure = engine.time_averaged_pure(atoms)
        rhos = np.einsum("si,sj->sij", atoms, atoms.conj())
        by_density = engine.time_averaged_density(rhos)
        for k, a in enumerate(atoms):
            psi0 = QuantumState.from_atoms(a, spec)
            rho0 = psi0.to_density()
            ent = []
            for t in grid.t_points:
                psi_t = dynamics.evolve_pure(spectral, psi0, t).data
                rho_t = dynamics.evolve_density(spectral, rho0, t).data
                worst_state = max(worst_state, np.abs(rho_t - np.outer(psi_t, psi_t.conj())).max())
                ent.append(von_neumann_entropy(dynamics.trace_out_fields(rho_t, spec)))
            direct = float(np.mean(ent))
            routed = dynamics.time_averaged_entropy(spectral, psi0, grid)
            worst_entropy = max(worst_entropy, abs(direct - by_pure[k]), abs(direct - by_density[k]),
                                abs(direct - routed))
    ok = worst_state < 1e-10 and worst_entropy < 1e-10
    return ok, f"state deviation {worst_state:.2e}, S_t deviation {worst_entropy:.2e} (<1e-10)"


def check_unitary_invariants(seed: int = 14) -> tuple[bool, str]:
    """Trace, global purity and global entropy are constant under evolution."""
    rng = _rng(seed)
    worst = 0.0
    for spec in (ModelSpec.two_level(2, 1), ModelSpec.three_level(1, 2)):
        spectral = build_composite_spectrum(spec)
        rho0 = _random_composite_state(spec, rng, True)
        p0 = np.trace(rho0.data @ rho0.data).real
        s0 = von_neumann_entropy(rho0.data)
        for t in (0.0, 3.3, 47.0, 812.0):
            rho = dynamics.evolve_density(spectral, rho0, t).data
            worst = max(worst, abs(np.trace(rho).real - 1), abs(np.trace(rho @ rho).real - p0),
                        abs(von_neumann_entropy(rho) - s0))
    return worst < 1e-10, f"max drift {worst:.2e} (<1e-10)"


def check_measure_identities(seed: int = 15, size: int = 500) -> tuple[bool, str]:
    """Pure two-qubit states: entanglement entropy is the binary entropy of the concurrence, and Q = C^2."""
    psis = sample_haar_pure(4, _rng(seed), size)
    rho = np.einsum("si,sj->sij", psis, psis.conj())
    c = concurrence(rho)
    e = entanglement_entropy(psis)
    x = np.clip((1 + np.sqrt(np.clip(1 - c ** 2, 0, None))) / 2, 1e-300, 1)
    y = np.clip(1 - x, 1e-300, 1)
    h = -x * np.log2(x) - np.where(1 - x > 0, y * np.log2(y), 0.0)
    dev_e = float(np.abs(h - e).max())
    dev_q = float(np.abs(meyer_wallach_q_pure(psis, 2) - c ** 2).max())
    werner = 0.5 * np.outer([0, 1, -1, 0], [0, 1, -1, 0]) / 2 + 0.5 * np.eye(4) / 4
    dev_w = abs(concurrence(werner) - 0.25)
    ok = dev_e < 1e-8 and dev_q < 1e-8 and dev_w < 1e-12
    return ok, f"entropy identity {dev_e:.2e}, Q=C^2 {dev_q:.2e}, Werner {dev_w:.2e}"


def check_haar_overlaps(seed: int = 16, size: int = FAST_CAP) -> tuple[bool, str]:
    """Overlaps ``|<0|psi>|^2`` of Haar states follow Beta(1, l-1) (KS test at the 1% level)."""
    worst_p = 1.0
    for dim in (2, 4, 8, 9):
        psi = sample_haar_pure(dim, _rng(seed + dim), size)
        p = stats.kstest(np.abs(psi[:, 0]) ** 2, stats.beta(1, dim - 1).cdf).pvalue
        # a fixed reference vector other than a basis state
        ref = sample_haar_pure(dim, _rng(seed + 100 + dim))
        p2 = stats.kstest(np.abs(psi @ ref.conj()) ** 2, stats.beta(1, dim - 1).cdf).pvalue
        worst_p = min(worst_p, p, p2)
    return worst_p > 0.01, f"smallest KS p-value {worst_p:.3f} (>0.01)"


def check_ginibre_purity(seed: int = 17, size: int = FAST_CAP) -> tuple[bool, str]:
    """Mean purity of Hilbert-Schmidt states in dimension 4 is 8/17."""
    rho = sample_ginibre_mixed(4, _rng(seed), size)
    pur = np.einsum("sij,sji->s", rho, rho).real
    z = (pur.mean() - 8 / 17) / (pur.std(ddof=1) / math.sqrt(size))
    low = np.linalg.eigvalsh(rho).min()
    ok = abs(z) < 4 and low > -1e-12
    return ok, f"mean purity {pur.mean():.4f} vs {8 / 17:.4f} (z={z:.2f}), min eigenvalue {low:.1e}"


def check_grid_convergence(seed: int = 18, size: int = 40) -> tuple[bool, str]:
    """No sample's S_t changes by 1e-4 or more when the default grid is refined twofold."""
    rng = _rng(seed)
    worst = 0.0
    cases = ((ModelSpec.two_level(2), False), (ModelSpec.two_level(3), False), (ModelSpec.two_level(2, 1), False),
             (ModelSpec.two_level(2, 0), True), (ModelSpec.two_level(2, 2), True), (ModelSpec.three_level(2, 1), False))
    for spec, mixed in cases:
        spectral = build_composite_spectrum(spec)
        grid = default_grid(spec)
        states = sample_ginibre_mixed(4, rng, size) if mixed else sample_haar_pure(spec.atoms_dim, rng, size)
        coarse = FieldTracedEvolution(spectral, grid).time_averaged(states, not mixed)
        fine = FieldTracedEvolution(spectral, grid.refined(2)).time_averaged(states, not mixed)
        worst = max(worst, float(np.abs(fine - coarse).max()))
    return worst < 1e-4, f"largest per-sample change {worst:.2e} (<1e-4)"


CHECKS: dict[str, Callable[..., tuple[bool, str]]] = {
    "single_excitation_invariance": check_single_excitation_invariance,
    "eigenbasis_vs_expm": check_eigenbasis_vs_expm,
    "pure_mixed_consistency": check_pure_mixed_consistency,
    "unitary_invariants": check_unitary_invariants,
    "measure_identities": check_measure_identities,
    "haar_overlap_distribution": check_haar_overlaps,
    "ginibre_purity": check_ginibre_purity,
    "grid_convergence": check_grid_convergence,
}


def _seed_of(fn) -> int:
    return fn.__defaults__[0] if fn.__defaults__ else 0


def run_checks(level: str = "fast", profile: str = "full", echo: Callable[[str], None] | None = None,
               stop_on_failure: bool = False) -> list[CheckResult]:
    """Run the property checks, then (for ``level='full'``) the acceptance criteria."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # reported, not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(ok), detail, _seed_of(fn), time.perf_counter() - t0)
        results.append(res)
        if echo:
            echo(res.line())
        if stop_on_failure and not res.passed:
            return results
    if level == "full":
        from .acceptance import run_acceptance

        for crit in run_acceptance(profile, echo=echo):
            results.append(CheckResult(f"criterion {crit.cid}", crit.passed, crit.summary(), crit.seed))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = [r.line() for r in results]
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        lines.append(f"first failure: {failed[0].name} (seed={failed[0].seed})")
    return "\n".join(lines)
