"""Random initial atomic states and constraint filters.

Every sample belongs to a fixed-size block of candidates.  Block ``k`` of
stream ``s`` draws from ``SeedSequence(seed, spawn_key=(s, k))``, so the
ensemble is a function of ``(seed, stream)`` alone and does not depend on
how blocks are distributed over workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.stats import unitary_group

from .dynamics import von_neumann_entropy
from .measures import atom_energies, atom_energies_from_populations, atom_energies_pure

__all__ = [
    "Sampler",
    "ConstraintKind",
    "Constraint",
    "EnsembleSpec",
    "AcceptanceRateError",
    "FilterResult",
    "BLOCK_SIZE",
    "MIN_ACCEPTANCE_RATE",
    "rate_below",
    "local_filter",
    "block_rng",
    "haar_angles",
    "haar_populations",
    "sample_haar_pure",
    "sample_ginibre_mixed",
    "sample_single_excitation",
    "make_reference_states",
    "default_tolerance",
    "constraint_quantity",
    "filter_constraint",
    "draw_block",
    "draw_ensemble",
    "EnsembleDraw",
]

BLOCK_SIZE = 8192
MIN_ACCEPTANCE_RATE = 1e-6


def rate_below(accepted: int, candidates: int, min_rate: float) -> bool:
    """True once even an optimistic estimate of the acceptance rate is below ``min_rate``.

    The optimistic estimate is a three-sigma Poisson upper bound on the
    accepted count, so a rate near the threshold is not rejected on noise.
    """
    if min_rate <= 0 or candidates == 0:
        return False
    upper = accepted + 1 + 3 * math.sqrt(accepted + 1)
    return upper / candidates < min_rate


class AcceptanceRateError(RuntimeError):
    """A constraint accepts too few candidates to ever fill the ensemble."""


class Sampler(str, enum.Enum):
    HAAR_PURE = "haar_pure"
    GINIBRE_MIXED = "ginibre_mixed"
    SINGLE_EXCITATION = "single_excitation"
    SEPARABLE_HAAR_PRODUCT = "separable_haar_product"
    MAX_ENTANGLED = "max_entangled"
    GHZ_ORBIT = "ghz_orbit"

    @property
    def mixed(self) -> bool:
        return self is Sampler.GINIBRE_MIXED


class ConstraintKind(str, enum.Enum):
    FIXED_PER_ATOM_ENERGY = "fixed_per_atom_energy"
    FIXED_TOTAL_ENERGY = "fixed_total_energy"
    FIXED_INITIAL_ENTROPY = "fixed_initial_entropy"


def default_tolerance(kind: ConstraintKind, n_subsystems: int, value: float) -> float:
    """Selection half-widths used for the energy and mixedness tables."""
    kind = ConstraintKind(kind)
    edge = math.isclose(abs(value), 0.4)
    if kind is ConstraintKind.FIXED_PER_ATOM_ENERGY:
        if n_subsystems == 2:
            return 0.005
        if n_subsystems == 3:
            return 0.02 if edge else 0.01
    elif kind is ConstraintKind.FIXED_TOTAL_ENERGY:
        if n_subsystems == 2:
            return 2e-4 if edge else 1e-4
        if n_subsystems == 3:
            if edge:
                return 0.01
            return 1e-5 if math.isclose(value, 0.0, abs_tol=1e-12) else 5e-5
    else:
        if math.isclose(value, 1.2) or math.isclose(value, 1.4):
            return 0.0005
        return 0.002
    raise ValueError(f"no tabulated tolerance for {kind.value} with N={n_subsystems}; pass tol explicitly")


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    value: float
    tol: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if not self.tol > 0:
            raise ValueError("constraint tolerance must be positive")


@dataclass(frozen=True)
class EnsembleSpec:
    sampler: Sampler = Sampler.HAAR_PURE
    size: int = 1000
    seed: int = 0
    constraint: Constraint | None = None
    atom_dim: int = 2
    n_subsystems: int = 2

    def __post_init__(self):
        object.__setattr__(self, "sampler", Sampler(self.sampler))
        if self.size < 1:
            raise ValueError("ensemble size must be positive")
        if self.atom_dim not in (2, 3):
            raise ValueError("atom_dim must be 2 or 3")
        if self.sampler is Sampler.GINIBRE_MIXED and (self.atom_dim, self.n_subsystems) != (2, 2):
            raise ValueError("Ginibre mixed states are restricted to two qubits")
        if self.sampler in (Sampler.SINGLE_EXCITATION, Sampler.MAX_ENTANGLED, Sampler.GHZ_ORBIT) \
                and self.atom_dim != 2:
            raise ValueError(f"{self.sampler.value} states are defined for two-level atoms")
        if self.sampler is Sampler.SINGLE_EXCITATION and self.n_subsystems < 2:
            raise ValueError("single-excitation states need at least two atoms")
        if self.constraint is not None:
            if self.atom_dim != 2:
                raise ValueError("constraint filters are defined for two-level atoms only")
            if (self.constraint.kind is ConstraintKind.FIXED_INITIAL_ENTROPY) != self.sampler.mixed:
                raise ValueError("initial-entropy constraints apply to mixed ensembles only, "
                                 "energy constraints to pure ones")

    @property
    def dim(self) -> int:
        return self.atom_dim ** self.n_subsystems


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def haar_angles(dim: int, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Angles ``theta_1..theta_{l-1}`` and phases ``phi_1..phi_{l-1}``.

    ``theta_k`` has density ``k sin(2 theta) sin(theta)^(2k-2)`` on
    ``[0, pi/2]``, i.e. CDF ``sin(theta)^(2k)``, and is drawn by inversion.
    """
    k = np.arange(1, dim)
    u = rng.random((size, dim - 1))
    theta = np.arcsin(u ** (1.0 / (2 * k)))
    phi = rng.uniform(0.0, 2 * np.pi, (size, dim - 1))
    return theta, phi


def haar_populations(dim: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``|c_j|^2`` of Haar states in the hyperspherical parametrization.

    Uses ``sin^2(theta_k) = u^(1/k)`` directly, so no trigonometry is needed.
    Component ``j`` is ``prod_{k>l-1-j} sin^2(theta_k) cos^2(theta_{l-1-j})``.
    """
    k = np.arange(1, dim)
    s2 = (rng.random((size, dim - 1)) ** (1.0 / k))[:, ::-1]  # column r holds theta_{l-1-r}
    lead = np.ones((size, 1))
    prods = np.concatenate([lead, np.cumprod(s2, axis=1)], axis=1)
    return prods * np.concatenate([1.0 - s2, lead], axis=1)


def _attach_phases(pops: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n, dim = pops.shape
    ph = rng.uniform(0.0, 2 * np.pi, (n, dim - 1))[:, ::-1]
    phases = np.concatenate([np.ones((n, 1), dtype=complex), np.exp(1j * ph)], axis=1)
    return np.sqrt(np.clip(pops, 0.0, None)) * phases


def sample_haar_pure(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random pure states from the hyperspherical parametrization.

    The first component carries no phase and the last no cosine; phases
    ``phi_k`` are uniform on ``[0, 2 pi)``.
    """
    if dim < 2:
        raise ValueError("Haar sampling needs dimension >= 2")
    n = 1 if size is None else size
    out = _attach_phases(haar_populations(dim, rng, n), rng)
    return out[0] if size is None else out


def sample_ginibre_mixed(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """``M M^dag / Tr(M M^dag)`` with square complex Gaussian ``M``."""
    n = 1 if size is None else size
    out = np.empty((n, dim, dim), dtype=complex)
    todo = np.arange(n)
    while todo.size:
        m = rng.standard_normal((todo.size, dim, dim)) + 1j * rng.standard_normal((todo.size, dim, dim))
        w = m @ m.conj().swapaxes(-1, -2)
        tr = np.trace(w, axis1=-2, axis2=-1).real
        ok = tr > np.finfo(float).tiny
        out[todo[ok]] = w[ok] / tr[ok, None, None]
        todo = todo[~ok]
    return out[0] if size is None else out


def sample_single_excitation(n_atoms: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """``sum_i m_i |g..e_i..g>`` with ``m`` uniform on the complex unit sphere."""
    if n_atoms < 2:
        raise ValueError("single-excitation states need at least two atoms")
    n = 1 if size is None else size
    m = sample_haar_pure(n_atoms, rng, n)
    out = np.zeros((n, 2 ** n_atoms), dtype=complex)
    for i in range(n_atoms):
        out[:, 1 << (n_atoms - 1 - i)] = m[:, i]
    return out[0] if size is None else out


FILTER_TOL = 1e-7
FILTER_MAX_SWEEPS = 2000


def local_filter(psi: np.ndarray, n_atoms: int, tol: float = FILTER_TOL,
                 max_sweeps: int = FILTER_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Push qubit states onto ``Q = N/2`` by local filtering.

    Each sweep applies ``rho_i^(-1/2)`` to every qubit in turn and renormalizes
    until all one-qubit marginals are within ``tol`` of ``I/2``.  Returns the
    filtered states and a mask of those that converged; the residual in Q is of
    order ``tol**2``.
    """
    psi = np.atleast_2d(psi)
    s = len(psi)
    shape = (2,) * n_atoms
    t = psi.reshape((s,) + shape).astype(complex)
    active = np.arange(s)
    done = np.zeros(s, dtype=bool)
    half = np.eye(2) / 2
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        a = t[active]
        dev = np.zeros(len(active))
        for i in range(n_atoms):
            ai = np.moveaxis(a, i + 1, 1).reshape(len(active), 2, -1)
            rho = ai @ ai.conj().swapaxes(1, 2)
            dev = np.maximum(dev, np.abs(rho - half).max(axis=(1, 2)))
            w, v = np.linalg.eigh(rho)
            m = (v / np.sqrt(np.maximum(w, 1e-300))[:, None, :]) @ v.conj().swapaxes(1, 2)
            ai = m @ ai
            ai /= np.linalg.norm(ai.reshape(len(active), -1), axis=1)[:, None, None]
            a = np.moveaxis(ai.reshape((len(active), 2) + shape[1:]), 1, i + 1)
        # dev is taken as the sweep proceeds, each marginal just before its own update
        ok = dev < tol
        t[active] = a
        done[active[ok]] = True
        active = active[~ok]
    return t.reshape(s, -1), done


def make_reference_states(kind: Sampler, n_atoms: int, rng: np.random.Generator,
                          size: int | None = None, atom_dim: int = 2) -> np.ndarray:
    """Separable Haar products (``Q = 0``) or maximally entangled states (``Q = N/2``).

    ``MAX_ENTANGLED`` locally filters Haar states (see :func:`local_filter`),
    redrawing the rare ones that do not converge; for two and three qubits this
    is the Bell or GHZ local-unitary orbit.  ``GHZ_ORBIT`` applies Haar local
    unitaries to GHZ.  Separable products may use qutrits.
    """
    kind = Sampler(kind)
    n = 1 if size is None else size
    if kind is Sampler.SEPARABLE_HAAR_PRODUCT:
        out = np.ones((n, 1), dtype=complex)
        for _ in range(n_atoms):
            q = sample_haar_pure(atom_dim, rng, n)
            out = (out[:, :, None] * q[:, None, :]).reshape(n, -1)
    elif kind in (Sampler.MAX_ENTANGLED, Sampler.GHZ_ORBIT):
        if atom_dim != 2:
            raise ValueError("maximally entangled reference families are defined for qubits")
        if kind is Sampler.MAX_ENTANGLED:
            out, _ = _max_entangled(n_atoms, rng, n)
        else:
            out = _ghz_orbit(n_atoms, rng, n)
    else:
        raise ValueError(f"{kind.value} is not a reference family")
    return out[0] if size is None else out


def _max_entangled(n_atoms: int, rng: np.random.Generator, size: int) -> tuple[np.ndarray, int]:
    """``size`` filtered states and the number of Haar candidates used."""
    parts, have, candidates = [], 0, 0
    while have < size:
        k = size - have
        states, ok = local_filter(sample_haar_pure(2 ** n_atoms, rng, k), n_atoms)
        parts.append(states[ok])
        have += int(ok.sum())
        candidates += k
    return np.concatenate(parts), candidates


def _ghz_orbit(n_atoms: int, rng: np.random.Generator, size: int) -> np.ndarray:
    ghz = np.zeros(2 ** n_atoms, dtype=complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    t = np.broadcast_to(ghz.reshape((1,) + (2,) * n_atoms), (size,) + (2,) * n_atoms)
    us = unitary_group.rvs(2, size=size * n_atoms, random_state=rng).reshape(size, n_atoms, 2, 2)
    for i in range(n_atoms):
        t = np.moveaxis(np.einsum("sab,s...b->s...a", us[:, i], np.moveaxis(t, 1 + i, -1)), -1, 1 + i)
    return t.reshape(size, -1)


def constraint_quantity(states: np.ndarray, kind: ConstraintKind, n_atoms: int, mixed: bool) -> np.ndarray:
    """Per-atom energies ``(S, N)``, mean energy ``(S,)`` or initial entropy ``(S,)``."""
    kind = ConstraintKind(kind)
    if kind is ConstraintKind.FIXED_INITIAL_ENTROPY:
        if not mixed:
            return np.zeros(len(states))
        return von_neumann_entropy(states)
    energies = atom_energies(states, n_atoms) if mixed else atom_energies_pure(states, n_atoms)
    if kind is ConstraintKind.FIXED_PER_ATOM_ENERGY:
        return energies
    return energies.mean(axis=-1)


def constraint_quantity_from_populations(pops: np.ndarray, kind: ConstraintKind, n_atoms: int) -> np.ndarray:
    kind = ConstraintKind(kind)
    if kind is ConstraintKind.FIXED_INITIAL_ENTROPY:
        return np.zeros(len(pops))
    energies = atom_energies_from_populations(pops, n_atoms)
    return energies if kind is ConstraintKind.FIXED_PER_ATOM_ENERGY else energies.mean(axis=-1)


def _within(q: np.ndarray, constraint: Constraint) -> np.ndarray:
    dev = np.abs(q - constraint.value)
    return np.all(dev <= constraint.tol, axis=-1) if dev.ndim == 2 else dev <= constraint.tol


@dataclass
class FilterResult:
    accepted: np.ndarray
    mask: np.ndarray
    rate: float


def filter_constraint(samples: np.ndarray, constraint: Constraint | None, n_atoms: int,
                      mixed: bool = False, min_rate: float = MIN_ACCEPTANCE_RATE) -> FilterResult:
    """Keep samples whose constrained quantity lies within ``tol`` of the target.

    Per-atom energy constraints apply to every atom at once.  Raises
    :class:`AcceptanceRateError` when the batch shows the acceptance rate to be
    below ``min_rate`` (see :func:`rate_below`).
    """
    n = len(samples)
    if constraint is None:
        return FilterResult(samples, np.ones(n, dtype=bool), 1.0)
    q = constraint_quantity(samples, constraint.kind, n_atoms, mixed)
    mask = _within(q, constraint)
    rate = float(mask.mean()) if n else 0.0
    if rate_below(int(mask.sum()), n, min_rate):
        raise AcceptanceRateError(
            f"{constraint.kind.value}={constraint.value}+-{constraint.tol} accepted {mask.sum()} of {n} "
            f"candidates (rate {rate:.2e} < {min_rate:.0e})"
        )
    return FilterResult(samples[mask], mask, rate)


def _raw_block(spec: EnsembleSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    s = spec.sampler
    if s is Sampler.HAAR_PURE:
        return sample_haar_pure(spec.dim, rng, size)
    if s is Sampler.GINIBRE_MIXED:
        return sample_ginibre_mixed(spec.dim, rng, size)
    if s is Sampler.SINGLE_EXCITATION:
        return sample_single_excitation(spec.n_subsystems, rng, size)
    return make_reference_states(s, spec.n_subsystems, rng, size, spec.atom_dim)


def draw_block(spec: EnsembleSpec, stream: int, block: int) -> tuple[np.ndarray, int]:
    """Accepted states of one candidate block and the number of candidates.

    Energy filters on Haar states only need populations, so phases are drawn
    for the accepted candidates alone.
    """
    rng = block_rng(spec.seed, stream, block)
    if spec.sampler is Sampler.HAAR_PURE and spec.constraint is not None:
        pops = haar_populations(spec.dim, rng, BLOCK_SIZE)
        q = constraint_quantity_from_populations(pops, spec.constraint.kind, spec.n_subsystems)
        return _attach_phases(pops[_within(q, spec.constraint)], rng), BLOCK_SIZE
    if spec.sampler is Sampler.MAX_ENTANGLED:
        states, ok = local_filter(sample_haar_pure(spec.dim, rng, BLOCK_SIZE), spec.n_subsystems)
        return states[ok], BLOCK_SIZE
    raw = _raw_block(spec, rng, BLOCK_SIZE)
    if spec.constraint is None:
        return raw, BLOCK_SIZE
    res = filter_constraint(raw, spec.constraint, spec.n_subsystems, spec.sampler.mixed, min_rate=0.0)
    return res.accepted, BLOCK_SIZE


@dataclass
class EnsembleDraw:
    states: np.ndarray
    candidates: int
    accepted: int
    blocks: int

    @property
    def acceptance_rate(self) -> float:
        """Accepted fraction over every screened block, including the surplus of the last one."""
        return self.accepted / self.candidates if self.candidates else 0.0


def draw_ensemble(spec: EnsembleSpec, stream: int = 0,
                  map_fn: Callable[..., Iterable] = map, wave: int = 1) -> EnsembleDraw:
    """Draw ``spec.size`` accepted states, block by block in index order.

    ``map_fn`` may be a parallel ``map``; ``wave`` blocks are submitted at a
    time.  Extra blocks computed by the last wave are discarded, so the
    result does not depend on ``map_fn`` or ``wave``.
    """
    parts, have, candidates, block = [], 0, 0, 0
    while have < spec.size:
        blocks = list(range(block, block + max(1, wave)))
        for states, cand in map_fn(draw_block, [spec] * len(blocks), [stream] * len(blocks), blocks):
            if have >= spec.size:
                break
            parts.append(states)
            have += len(states)
            candidates += cand
            block += 1
        if spec.constraint is not None and rate_below(have, candidates, MIN_ACCEPTANCE_RATE):
            raise AcceptanceRateError(
                f"{spec.constraint.kind.value}={spec.constraint.value}+-{spec.constraint.tol}: "
                f"{have} accepted of {candidates} candidates"
            )
    states = np.concatenate(parts)[: spec.size]
    return EnsembleDraw(states, candidates, have, block)
