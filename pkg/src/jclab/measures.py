"""Entanglement and state-characterization quantities for atomic states.

Functions accept a single state or a stack of states along leading axes.
Pure states are vectors of length ``atom_dim ** N``; density matrices are
square.  Atomic levels are indexed by excitation count (``g=0, e=1``), so the
two-qubit basis order is ``gg, ge, eg, ee``.
"""

from __future__ import annotations

import numpy as np

from .dynamics import (
    DensityMatrixError,
    entropy_from_eigenvalues,
    single_atom_state,
    von_neumann_entropy,
)

__all__ = [
    "MEASURES",
    "atom_reductions_pure",
    "atom_reductions",
    "purity",
    "meyer_wallach_q",
    "meyer_wallach_q_pure",
    "entanglement_entropy",
    "concurrence",
    "mean_energy_per_atom",
    "mean_energy_total",
    "atom_energies_pure",
    "atom_energies",
    "atom_energies_from_populations",
    "initial_entropy",
]

MEASURES = ("meyer_wallach", "entanglement_entropy", "concurrence")

_SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


def atom_reductions_pure(psi: np.ndarray, n_atoms: int, atom_dim: int = 2) -> np.ndarray:
    """Single-atom density matrices of pure states, shape ``(..., N, d, d)``."""
    psi = np.asarray(psi)
    batch = psi.shape[:-1]
    if psi.shape[-1] != atom_dim ** n_atoms:
        raise ValueError(f"vector length {psi.shape[-1]} is not {atom_dim}**{n_atoms}")
    t = psi.reshape(batch + (atom_dim,) * n_atoms)
    nb = len(batch)
    out = []
    for i in range(n_atoms):
        m = np.moveaxis(t, nb + i, -1).reshape(batch + (-1, atom_dim))
        out.append(np.einsum("...ka,...kb->...ab", m, m.conj()))
    return np.stack(out, axis=-3)


def atom_reductions(rho: np.ndarray, n_atoms: int, atom_dim: int = 2) -> np.ndarray:
    rho = np.asarray(rho)
    return np.stack([single_atom_state(rho, i, n_atoms, atom_dim) for i in range(n_atoms)], axis=-3)


def purity(rho: np.ndarray) -> np.ndarray | float:
    """``Tr rho^2``."""
    rho = np.asarray(rho)
    out = np.einsum("...ij,...ji->...", rho, rho).real
    return float(out) if out.ndim == 0 else out


def _require_qubits(atom_dim: int) -> None:
    if atom_dim != 2:
        raise ValueError("the Meyer-Wallach measure is defined for qubits only")


def meyer_wallach_q(rho_atoms: np.ndarray, n_atoms: int, atom_dim: int = 2):
    """``Q = N - sum_i Tr rho_i^2`` (unnormalized, range ``[0, N/2]``)."""
    _require_qubits(atom_dim)
    red = atom_reductions(rho_atoms, n_atoms)
    out = n_atoms - purity(red).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def meyer_wallach_q_pure(psi: np.ndarray, n_atoms: int, atom_dim: int = 2):
    _require_qubits(atom_dim)
    red = atom_reductions_pure(psi, n_atoms)
    out = n_atoms - np.asarray(purity(red)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def entanglement_entropy(state: np.ndarray, atom_dim: int = 2, *, density: bool = False, tol: float = 1e-8):
    """Entropy of the first atom of a pure two-atom state, in bits.

    ``state`` holds state vectors along the last axis, or a single density
    matrix when ``density=True`` (rejected unless it is pure).
    """
    psi = np.asarray(state)
    if density:
        if abs(purity(psi) - 1) > tol:
            raise DensityMatrixError("entanglement entropy needs a pure state")
        psi = np.linalg.eigh(psi)[1][:, -1]
    if psi.shape[-1] != atom_dim ** 2:
        raise ValueError("entanglement entropy is defined here for two-atom pure states")
    m = psi.reshape(psi.shape[:-1] + (atom_dim, atom_dim))
    sv = np.linalg.svd(m, compute_uv=False)
    out = entropy_from_eigenvalues(sv ** 2)
    return float(out) if np.ndim(out) == 0 else out


def concurrence(rho: np.ndarray, tol: float = 1e-10):
    """Wootters concurrence of two-qubit density matrices.

    The square roots of the eigenvalues of ``rho (Y x Y) rho* (Y x Y)`` are
    the singular values of ``sqrt(rho) (Y x Y) sqrt(rho)*``; the latter are
    used because they stay accurate when several of them vanish.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ValueError("concurrence needs 4x4 two-qubit density matrices")
    w, v = np.linalg.eigh(rho)
    if w.min() < -tol:
        raise DensityMatrixError(f"concurrence input has eigenvalue {w.min():.3e} < 0")
    root = (v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ v.conj().swapaxes(-1, -2)
    sv = np.linalg.svd(root @ _YY @ root.conj(), compute_uv=False)  # descending
    out = np.maximum(0.0, sv[..., 0] - sv[..., 1:].sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def _excitation_table(n_atoms: int) -> np.ndarray:
    """``table[j, i] = 1`` when atom ``i`` is excited in basis state ``j``."""
    j = np.arange(2 ** n_atoms)[:, None]
    return ((j >> (n_atoms - 1 - np.arange(n_atoms))) & 1).astype(float)


def atom_energies_from_populations(pops: np.ndarray, n_atoms: int) -> np.ndarray:
    """Per-atom energies from basis populations ``|c_j|^2``."""
    return np.asarray(pops) @ _excitation_table(n_atoms) - 0.5


def atom_energies_pure(psi: np.ndarray, n_atoms: int) -> np.ndarray:
    """``<E_i>`` of every atom in units of ``omega_A``, shape ``(..., N)``."""
    return atom_energies_from_populations(np.abs(np.asarray(psi)) ** 2, n_atoms)


def atom_energies(rho: np.ndarray, n_atoms: int) -> np.ndarray:
    red = atom_reductions(rho, n_atoms)
    return 0.5 * (red[..., 1, 1].real - red[..., 0, 0].real)


def _as_atomic(state, n_atoms):
    state = np.asarray(state)
    if state.ndim == 2 and state.shape == (2 ** n_atoms, 2 ** n_atoms):
        return state, False
    return state, True


def mean_energy_per_atom(state: np.ndarray, which: int, n_atoms: int) -> float:
    """``Tr(rho_i r3 / 2)`` for one two-level atom of a pure or mixed state."""
    if not 0 <= which < n_atoms:
        raise IndexError(f"atom index {which} out of range for {n_atoms} atoms")
    state, pure = _as_atomic(state, n_atoms)
    energies = atom_energies_pure(state, n_atoms) if pure else atom_energies(state, n_atoms)
    return float(energies[which])


def mean_energy_total(state: np.ndarray, n_atoms: int) -> float:
    state, pure = _as_atomic(state, n_atoms)
    energies = atom_energies_pure(state, n_atoms) if pure else atom_energies(state, n_atoms)
    return float(np.mean(energies))


def initial_entropy(rho_atoms: np.ndarray):
    """Von Neumann entropy of the initial atomic state, in bits."""
    return von_neumann_entropy(rho_atoms)
