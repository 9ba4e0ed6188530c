"""Hamiltonians and spectra of N non-interacting Jaynes-Cummings subsystems.

Each subsystem is one atom coupled to one field mode.  The subsystem basis is
ordered atom-major, ``index = level * fock_cutoff + photons``, where the atomic
level index equals its excitation count (``g=0, e=1`` for two-level atoms and
``g=0, e1=1, e2=2`` for the cascade).  The composite basis is the Kronecker
product of subsystem bases in subsystem order.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AtomKind",
    "ModelSpec",
    "SectorBlock",
    "SubsystemSpectrum",
    "SpectralModel",
    "SpectralError",
    "build_subsystem_hamiltonian",
    "sector_decompose",
    "build_composite_spectrum",
    "subsystem_labels",
    "composite_labels",
]


class SpectralError(RuntimeError):
    """Raised when a sector block cannot be diagonalized."""


class AtomKind(str, enum.Enum):
    TWO_LEVEL = "two_level"
    THREE_LEVEL_CASCADE = "three_level_cascade"

    @property
    def dim(self) -> int:
        return 2 if self is AtomKind.TWO_LEVEL else 3

    @property
    def level_names(self) -> tuple[str, ...]:
        return ("g", "e") if self is AtomKind.TWO_LEVEL else ("g", "e1", "e2")

    @property
    def max_excitation(self) -> int:
        return self.dim - 1


@dataclass(frozen=True)
class ModelSpec:
    """Full definition of an N-JC model.

    ``fock_cutoff`` defaults to the smallest truncation that contains every
    state reachable from ``|level, n>`` (``n + 2`` for two-level atoms,
    ``n + 3`` for the cascade).
    """

    atom_kind: AtomKind = AtomKind.TWO_LEVEL
    n_subsystems: int = 2
    coupling: float = 0.1
    atom_frequency: float = 1.2
    field_frequency: float = 1.0
    initial_photons: int = 0
    fock_cutoff: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "atom_kind", AtomKind(self.atom_kind))
        if int(self.n_subsystems) != self.n_subsystems or self.n_subsystems < 1:
            raise ValueError(f"n_subsystems must be a positive integer, got {self.n_subsystems}")
        if int(self.initial_photons) != self.initial_photons or self.initial_photons < 0:
            raise ValueError(f"initial_photons must be a non-negative integer, got {self.initial_photons}")
        for name in ("coupling", "atom_frequency", "field_frequency"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "n_subsystems", int(self.n_subsystems))
        object.__setattr__(self, "initial_photons", int(self.initial_photons))
        if self.fock_cutoff is None:
            object.__setattr__(self, "fock_cutoff", self.min_cutoff)
        elif self.fock_cutoff < self.min_cutoff:
            raise ValueError(
                f"fock_cutoff={self.fock_cutoff} cannot hold the states reachable from "
                f"n={self.initial_photons}; need at least {self.min_cutoff}"
            )

    @classmethod
    def two_level(cls, n_subsystems: int, initial_photons: int = 0, *,
                  coupling: float = 0.1, detuning_ratio: float = 2.0,
                  field_frequency: float = 1.0, fock_cutoff: int | None = None) -> "ModelSpec":
        """Two-level model with ``omega_A = omega + detuning_ratio * g``."""
        return cls(
            atom_kind=AtomKind.TWO_LEVEL,
            n_subsystems=n_subsystems,
            coupling=coupling,
            atom_frequency=field_frequency + detuning_ratio * coupling,
            field_frequency=field_frequency,
            initial_photons=initial_photons,
            fock_cutoff=fock_cutoff,
        )

    @classmethod
    def three_level(cls, n_subsystems: int, initial_photons: int = 0, *,
                    coupling: float = 0.1, atom_frequency: float = 1.2,
                    field_frequency: float = 1.0, fock_cutoff: int | None = None) -> "ModelSpec":
        return cls(
            atom_kind=AtomKind.THREE_LEVEL_CASCADE,
            n_subsystems=n_subsystems,
            coupling=coupling,
            atom_frequency=atom_frequency,
            field_frequency=field_frequency,
            initial_photons=initial_photons,
            fock_cutoff=fock_cutoff,
        )

    @property
    def atom_dim(self) -> int:
        return self.atom_kind.dim

    @property
    def min_cutoff(self) -> int:
        return self.initial_photons + 1 + self.atom_kind.max_excitation

    @property
    def subsystem_dim(self) -> int:
        return self.atom_dim * self.fock_cutoff

    @property
    def atoms_dim(self) -> int:
        return self.atom_dim ** self.n_subsystems

    @property
    def dim(self) -> int:
        return self.subsystem_dim ** self.n_subsystems

    @property
    def detuning(self) -> float:
        return abs(self.atom_frequency - self.field_frequency)

    @property
    def rabi_frequency(self) -> float:
        """Generalized Rabi frequency of the one-excitation block."""
        return float(np.hypot(self.detuning, 2.0 * self.coupling))

    def scaled(self, factor: float) -> "ModelSpec":
        return ModelSpec(
            atom_kind=self.atom_kind,
            n_subsystems=self.n_subsystems,
            coupling=self.coupling * factor,
            atom_frequency=self.atom_frequency * factor,
            field_frequency=self.field_frequency * factor,
            initial_photons=self.initial_photons,
            fock_cutoff=self.fock_cutoff,
        )


def subsystem_labels(spec: ModelSpec) -> list[tuple[int, int]]:
    """``(level, photons)`` label of every subsystem basis index."""
    return [(a, m) for a in range(spec.atom_dim) for m in range(spec.fock_cutoff)]


def composite_labels(spec: ModelSpec) -> list[tuple[tuple[int, int], ...]]:
    labels = subsystem_labels(spec)
    out = [()]
    for _ in range(spec.n_subsystems):
        out = [prev + (lab,) for prev in out for lab in labels]
    return out


def _atomic_energies(spec: ModelSpec) -> np.ndarray:
    wa = spec.atom_frequency
    if spec.atom_kind is AtomKind.TWO_LEVEL:
        # (omega_A / 2) r_3 with r_3 = |e><e| - |g><g|
        return np.array([-wa / 2, wa / 2])
    return np.array([-wa, 0.0, wa])


def build_subsystem_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """Dense Hamiltonian of one atom-field subsystem in the product basis.

    Two-level: ``(w_A/2) r3 + w (a^dag a + 1/2) + g (a r+ + a^dag r-)``.
    Cascade: ``-w_A|g><g| + w_A|e2><e2| + w (a^dag a + 1/2)``
    ``+ g (a (|e1><g| + |e2><e1|) + h.c.)``.
    The zero-point term of the field is kept.
    """
    if spec.fock_cutoff < spec.min_cutoff:
        raise ValueError(f"fock_cutoff {spec.fock_cutoff} below reachability bound {spec.min_cutoff}")
    d, c = spec.atom_dim, spec.fock_cutoff
    atom = np.diag(_atomic_energies(spec))
    photons = np.arange(c, dtype=float)
    fld = np.diag(spec.field_frequency * (photons + 0.5))
    lower = np.diag(np.sqrt(photons[1:]), k=1)  # a|m> = sqrt(m)|m-1>
    raise_atom = np.diag(np.ones(d - 1), k=-1)  # |level+1><level|
    interaction = spec.coupling * np.kron(raise_atom, lower)
    interaction = interaction + interaction.T
    return np.kron(atom, np.eye(c)) + np.kron(np.eye(d), fld) + interaction


@dataclass(frozen=True)
class SectorBlock:
    excitation_number: int
    indices: tuple[int, ...]
    basis_labels: tuple[tuple[int, int], ...]
    block_matrix: np.ndarray = field(repr=False)


def sector_decompose(hamiltonian: np.ndarray, spec: ModelSpec) -> list[SectorBlock]:
    """Split a subsystem Hamiltonian into excitation-number blocks.

    Sectors are listed by increasing excitation number; the top sectors are
    truncated by the Fock cutoff.
    """
    labels = subsystem_labels(spec)
    if hamiltonian.shape != (len(labels), len(labels)):
        raise ValueError(f"Hamiltonian shape {hamiltonian.shape} does not match spec dimension {len(labels)}")
    excitation = np.array([a + m for a, m in labels])
    cross = excitation[:, None] != excitation[None, :]
    leak = np.abs(hamiltonian[cross]).max(initial=0.0)
    if leak > 1e-12:
        raise AssertionError(f"Hamiltonian couples different excitation sectors (max element {leak:.3e})")
    blocks = []
    for k in np.unique(excitation):
        idx = np.flatnonzero(excitation == k)
        blocks.append(SectorBlock(
            excitation_number=int(k),
            indices=tuple(int(i) for i in idx),
            basis_labels=tuple(labels[i] for i in idx),
            block_matrix=hamiltonian[np.ix_(idx, idx)].copy(),
        ))
    return blocks


@dataclass(frozen=True)
class SubsystemSpectrum:
    """Eigenpairs of one subsystem; ``vectors[:, j]`` belongs to ``energies[j]``."""

    energies: np.ndarray
    vectors: np.ndarray
    excitations: np.ndarray

    def propagators(self, times) -> np.ndarray:
        """``exp(-i H t)`` for every time, shape ``(len(times), D, D)``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        phases = np.exp(-1j * np.multiply.outer(times, self.energies))
        return np.einsum("ij,tj,kj->tik", self.vectors, phases, self.vectors.conj())


def _diagonalize_sectors(blocks: list[SectorBlock], dim: int) -> SubsystemSpectrum:
    energies = np.empty(dim)
    vectors = np.zeros((dim, dim))
    excitations = np.empty(dim, dtype=int)
    col = 0
    for block in blocks:
        try:
            vals, vecs = np.linalg.eigh(block.block_matrix)
        except np.linalg.LinAlgError as exc:
            raise SpectralError(
                f"eigensolver failed on excitation sector {block.excitation_number} "
                f"{block.basis_labels}:\n{block.block_matrix}"
            ) from exc
        k = len(vals)
        energies[col:col + k] = vals
        vectors[list(block.indices), col:col + k] = vecs
        excitations[col:col + k] = block.excitation_number
        col += k
    return SubsystemSpectrum(energies, vectors, excitations)


@dataclass(frozen=True)
class SpectralModel:
    """Spectrum of the composite Hamiltonian built from identical subsystems.

    Composite eigenvectors are Kronecker products of subsystem eigenvectors
    and composite eigenvalues are the matching sums.  The dense composite
    quantities are built lazily; ensemble code only needs the subsystem part.
    """

    spec: ModelSpec
    subsystem: SubsystemSpectrum

    @property
    def subsystem_spectra(self) -> list[SubsystemSpectrum]:
        return [self.subsystem] * self.spec.n_subsystems

    @functools.cached_property
    def eigenvalues(self) -> np.ndarray:
        vals = np.zeros(1)
        for _ in range(self.spec.n_subsystems):
            vals = np.add.outer(vals, self.subsystem.energies).ravel()
        return vals

    @functools.cached_property
    def eigenvectors(self) -> np.ndarray:
        vecs = np.ones((1, 1))
        for _ in range(self.spec.n_subsystems):
            vecs = np.kron(vecs, self.subsystem.vectors)
        return vecs

    def hamiltonian(self) -> np.ndarray:
        """Composite Hamiltonian as a sum of embedded subsystem terms."""
        h = build_subsystem_hamiltonian(self.spec)
        dsub, n = self.spec.subsystem_dim, self.spec.n_subsystems
        total = np.zeros((self.spec.dim, self.spec.dim))
        for i in range(n):
            left, right = np.eye(dsub ** i), np.eye(dsub ** (n - i - 1))
            total += np.kron(np.kron(left, h), right)
        return total


def build_composite_spectrum(spec: ModelSpec) -> SpectralModel:
    h = build_subsystem_hamiltonian(spec)
    blocks = sector_decompose(h, spec)
    return SpectralModel(spec, _diagonalize_sectors(blocks, spec.subsystem_dim))
