import numpy as np
import pytest
from hypothesis import given, strategies as st

from jclab.model import (
    AtomKind,
    ModelSpec,
    SpectralError,
    build_composite_spectrum,
    build_subsystem_hamiltonian,
    composite_labels,
    sector_decompose,
    subsystem_labels,
)


def test_default_parameters_give_detuning_twice_the_coupling():
    spec = ModelSpec.two_level(2)
    assert spec.coupling == 0.1 and spec.field_frequency == 1.0
    assert spec.detuning == pytest.approx(2 * spec.coupling)
    assert spec.fock_cutoff == 2
    assert ModelSpec.three_level(2, 1).fock_cutoff == 4


def test_two_level_subsystem_matrix_entries():
    spec = ModelSpec.two_level(1, fock_cutoff=3)
    h = build_subsystem_hamiltonian(spec)
    labels = subsystem_labels(spec)
    idx = {lab: k for k, lab in enumerate(labels)}
    wa, w, g = spec.atom_frequency, spec.field_frequency, spec.coupling
    assert h[idx[(0, 0)], idx[(0, 0)]] == pytest.approx(-wa / 2 + w / 2)
    assert h[idx[(1, 1)], idx[(1, 1)]] == pytest.approx(wa / 2 + 1.5 * w)
    # <e, m-1| H |g, m> = g sqrt(m)
    assert h[idx[(1, 0)], idx[(0, 1)]] == pytest.approx(g)
    assert h[idx[(1, 1)], idx[(0, 2)]] == pytest.approx(g * np.sqrt(2))
    assert h[idx[(0, 0)], idx[(1, 1)]] == 0
    np.testing.assert_allclose(h, h.T)


@pytest.mark.parametrize("cutoff", [2, 4, 7])
def test_two_level_sector_eigenvalues_match_closed_form(cutoff):
    spec = ModelSpec.two_level(1, fock_cutoff=cutoff)
    blocks = sector_decompose(build_subsystem_hamiltonian(spec), spec)
    w, g, delta = spec.field_frequency, spec.coupling, spec.detuning
    for b in blocks:
        k = b.excitation_number
        ev = np.linalg.eigvalsh(b.block_matrix)
        if len(ev) == 1:
            continue
        rabi = np.sqrt(delta ** 2 + 4 * g ** 2 * k)
        np.testing.assert_allclose(ev, [w * k - rabi / 2, w * k + rabi / 2], atol=1e-12)


def test_cascade_blocks_are_three_by_three_with_ladder_couplings():
    spec = ModelSpec.three_level(1, 1)
    h = build_subsystem_hamiltonian(spec)
    blocks = sector_decompose(h, spec)
    sizes = sorted(len(b.indices) for b in blocks)
    assert max(sizes) == 3
    idx = {lab: k for k, lab in enumerate(subsystem_labels(spec))}
    g = spec.coupling
    assert h[idx[(1, 0)], idx[(0, 1)]] == pytest.approx(g)
    assert h[idx[(2, 0)], idx[(1, 1)]] == pytest.approx(g)
    assert h[idx[(2, 1)], idx[(1, 2)]] == pytest.approx(g * np.sqrt(2))
    assert h[idx[(2, 0)], idx[(0, 2)]] == 0
    assert np.diag(h)[idx[(0, 0)]] == pytest.approx(-spec.atom_frequency + 0.5)


def test_sector_decomposition_rejects_sector_mixing_matrix():
    spec = ModelSpec.two_level(1)
    h = build_subsystem_hamiltonian(spec)
    h[0, 3] = h[3, 0] = 0.01
    with pytest.raises(AssertionError):
        sector_decompose(h, spec)


@pytest.mark.parametrize("spec", [ModelSpec.two_level(2), ModelSpec.two_level(3, 1),
                                  ModelSpec.three_level(2, 0)])
def test_composite_spectrum_reconstructs_dense_hamiltonian(spec):
    sm = build_composite_spectrum(spec)
    v, e = sm.eigenvectors, sm.eigenvalues
    np.testing.assert_allclose(v @ np.diag(e) @ v.conj().T, sm.hamiltonian(), atol=1e-12)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(spec.dim), atol=1e-12)
    np.testing.assert_allclose(np.sort(e), np.linalg.eigvalsh(sm.hamiltonian()), atol=1e-12)


def test_composite_labels_follow_kronecker_order():
    spec = ModelSpec.two_level(2)
    labels = composite_labels(spec)
    assert len(labels) == spec.dim == 16
    assert labels[0] == ((0, 0), (0, 0))
    assert labels[1] == ((0, 0), (0, 1))
    assert labels[4] == ((0, 1), (0, 0))


def test_invalid_specs_are_rejected():
    with pytest.raises(ValueError):
        ModelSpec.two_level(2, 1, fock_cutoff=2)
    with pytest.raises(ValueError):
        ModelSpec.two_level(0)
    with pytest.raises(ValueError):
        ModelSpec(AtomKind.TWO_LEVEL, initial_photons=-1)


def test_eigensolver_failure_names_the_block(monkeypatch):
    import jclab.model as model

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(model.np.linalg, "eigh", broken)
    with pytest.raises(SpectralError, match="excitation"):
        build_composite_spectrum(ModelSpec.two_level(1))


@given(g=st.floats(0.01, 0.5), wa=st.floats(0.5, 2.0), photons=st.integers(0, 3))
def test_subsystem_spectrum_is_exact_for_random_parameters(g, wa, photons):
    spec = ModelSpec(AtomKind.TWO_LEVEL, 1, coupling=g, atom_frequency=wa, initial_photons=photons)
    sm = build_composite_spectrum(spec)
    h = build_subsystem_hamiltonian(spec)
    np.testing.assert_allclose(np.sort(sm.eigenvalues), np.linalg.eigvalsh(h), atol=1e-12)


def test_scaled_model_scales_every_frequency():
    spec = ModelSpec.three_level(2, 1)
    big = spec.scaled(3.0)
    np.testing.assert_allclose(np.sort(build_composite_spectrum(big).eigenvalues),
                               3.0 * np.sort(build_composite_spectrum(spec).eigenvalues), atol=1e-12)
