from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from jclab.ensembles import (
    BLOCK_SIZE,
    AcceptanceRateError,
    Constraint,
    ConstraintKind,
    EnsembleSpec,
    Sampler,
    block_rng,
    default_tolerance,
    draw_block,
    draw_ensemble,
    filter_constraint,
    haar_angles,
    haar_populations,
    local_filter,
    make_reference_states,
    rate_below,
    sample_ginibre_mixed,
    sample_haar_pure,
    sample_single_excitation,
)
from jclab.dynamics import FieldTracedEvolution, default_grid
from jclab.measures import atom_energies_pure, concurrence, entanglement_entropy, meyer_wallach_q_pure
from jclab.model import ModelSpec, build_composite_spectrum


@pytest.mark.parametrize("k", [1, 2, 5, 15])
def test_angle_density_integrates_to_the_inverse_cdf(k):
    density = lambda x: k * np.sin(2 * x) * np.sin(x) ** (2 * k - 2)
    assert quad(density, 0, np.pi / 2)[0] == pytest.approx(1.0, abs=1e-10)
    for theta in (0.2, 0.7, 1.3):
        assert quad(density, 0, theta)[0] == pytest.approx(np.sin(theta) ** (2 * k), abs=1e-10)


def test_sampled_angles_follow_their_density():
    theta, phi = haar_angles(6, block_rng(3, 0, 0), 4000)
    for k in range(1, 6):
        cdf = lambda x, k=k: np.sin(np.clip(x, 0, np.pi / 2)) ** (2 * k)
        assert stats.kstest(theta[:, k - 1], cdf).pvalue > 0.01
    assert stats.kstest(phi.ravel() / (2 * np.pi), "uniform").pvalue > 0.01


def test_populations_match_the_angle_parametrization():
    dim = 5
    theta, _ = haar_angles(dim, block_rng(9, 1, 2), 50)
    pops = haar_populations(dim, block_rng(9, 1, 2), 50)
    # component j: prod_{k > l-1-j} sin^2(theta_k) * cos^2(theta_{l-1-j}); the last has no cosine
    expected = np.empty_like(pops)
    for j in range(dim):
        top = dim - 1 - j
        prod = np.prod(np.sin(theta[:, top:]) ** 2, axis=1)
        expected[:, j] = prod * (np.cos(theta[:, top - 1]) ** 2 if top >= 1 else 1.0)
    np.testing.assert_allclose(pops, expected, atol=1e-12)
    np.testing.assert_allclose(pops.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("dim", [2, 4, 8, 9])
def test_haar_states_match_normalized_gaussian_vectors(dim):
    rng = block_rng(5, dim, 0)
    psi = sample_haar_pure(dim, rng, 3000)
    g = rng.standard_normal((3000, dim)) + 1j * rng.standard_normal((3000, dim))
    ref = g / np.linalg.norm(g, axis=1, keepdims=True)
    np.testing.assert_allclose(np.linalg.norm(psi, axis=1), 1.0, atol=1e-12)
    for j in (0, dim - 1):
        assert stats.ks_2samp(np.abs(psi[:, j]) ** 2, np.abs(ref[:, j]) ** 2).pvalue > 0.01
    # fourth moment of one amplitude: 2 / (l (l + 1))
    m4 = np.mean(np.abs(psi) ** 4)
    assert m4 == pytest.approx(2 / (dim * (dim + 1)), rel=0.06)


@pytest.mark.parametrize("dim", [4, 8])
def test_overlap_with_fixed_state_is_beta_distributed(dim):
    psi = sample_haar_pure(dim, block_rng(7, dim, 0), 3000)
    v = sample_haar_pure(dim, block_rng(7, dim, 1))
    overlaps = np.abs(psi @ v.conj()) ** 2
    assert stats.kstest(overlaps, stats.beta(1, dim - 1).cdf).pvalue > 0.01


def test_ginibre_states_are_density_matrices_with_hilbert_schmidt_purity():
    rho = sample_ginibre_mixed(4, block_rng(1, 2, 3), 4000)
    np.testing.assert_allclose(np.trace(rho, axis1=1, axis2=2), 1.0, atol=1e-12)
    np.testing.assert_allclose(rho, rho.conj().swapaxes(1, 2), atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    pur = np.einsum("sij,sji->s", rho, rho).real
    se = pur.std(ddof=1) / np.sqrt(len(pur))
    assert abs(pur.mean() - 8 / 17) < 4 * se


def test_ginibre_spectrum_matches_reduced_haar_states():
    # Hilbert-Schmidt states are also the reduced states of Haar vectors on C^d x C^d
    rho = sample_ginibre_mixed(4, block_rng(2, 2, 2), 3000)
    psi = sample_haar_pure(16, block_rng(2, 2, 3), 3000).reshape(3000, 4, 4)
    ref = psi @ psi.conj().swapaxes(1, 2)
    top = lambda r: np.linalg.eigvalsh(r)[:, -1]
    assert stats.ks_2samp(top(rho), top(ref)).pvalue > 0.01


def test_single_excitation_states():
    psi = sample_single_excitation(3, block_rng(0, 0, 0), 2000)
    support = [1, 2, 4]
    mask = np.ones(8, bool)
    mask[support] = False
    assert np.abs(psi[:, mask]).max() == 0
    np.testing.assert_allclose(np.linalg.norm(psi, axis=1), 1.0, atol=1e-12)
    assert stats.kstest(np.abs(psi[:, 4]) ** 2, stats.beta(1, 2).cdf).pvalue > 0.01
    with pytest.raises(ValueError):
        sample_single_excitation(1, block_rng(0, 0, 0))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_reference_families(n):
    rng = block_rng(4, n, 0)
    maxent = make_reference_states(Sampler.MAX_ENTANGLED, n, rng, 50)
    ghz = make_reference_states(Sampler.GHZ_ORBIT, n, rng, 50)
    sep = make_reference_states(Sampler.SEPARABLE_HAAR_PRODUCT, n, rng, 50)
    np.testing.assert_allclose(np.linalg.norm(maxent, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(meyer_wallach_q_pure(maxent, n), n / 2, atol=1e-12)
    np.testing.assert_allclose(meyer_wallach_q_pure(ghz, n), n / 2, atol=1e-12)
    np.testing.assert_allclose(meyer_wallach_q_pure(sep, n), 0.0, atol=1e-12)
    # the orbit is not a single state
    assert np.abs(maxent[0] - maxent[1]).max() > 1e-3


def test_local_filter_commutes_with_local_unitaries():
    n = 3
    psi = sample_haar_pure(8, block_rng(6, 0, 0), 20)
    us = [stats.unitary_group.rvs(2, random_state=k) for k in range(n)]
    u = np.kron(np.kron(us[0], us[1]), us[2])
    a, ok_a = local_filter(psi, n)
    b, ok_b = local_filter(psi @ u.T, n)
    assert ok_a.all() and ok_b.all()
    np.testing.assert_allclose(b, a @ u.T, atol=1e-7)


def test_two_qubit_filtering_gives_bell_states():
    out, ok = local_filter(sample_haar_pure(4, block_rng(6, 1, 0), 200), 2)
    assert ok.all()
    np.testing.assert_allclose(concurrence(np.einsum("si,sj->sij", out, out.conj())), 1.0, atol=1e-10)


def test_three_qubit_filtered_states_match_the_ghz_orbit():
    # generic three-qubit states filter into the GHZ class, so S_t has the same law
    spec = ModelSpec.two_level(3)
    engine = FieldTracedEvolution(build_composite_spectrum(spec), default_grid(spec))
    rng = block_rng(8, 3, 0)
    a = engine.time_averaged_pure(make_reference_states(Sampler.MAX_ENTANGLED, 3, rng, 600))
    b = engine.time_averaged_pure(make_reference_states(Sampler.GHZ_ORBIT, 3, rng, 600))
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_unconverged_states_are_flagged():
    # a product state has no filtered form with maximally mixed marginals
    prod = np.zeros(8, dtype=complex)
    prod[0] = 1
    psi = np.stack([prod, sample_haar_pure(8, block_rng(0, 0, 1))])
    _, ok = local_filter(psi, 3, max_sweeps=50)
    assert ok.tolist() == [False, True]


def test_rate_guard_needs_statistical_evidence():
    assert not rate_below(1, 1_000_000, 1e-6)  # consistent with a rate above the threshold
    assert not rate_below(0, 1_000_000, 1e-6)
    assert rate_below(0, 5_000_000, 1e-6)
    assert rate_below(3, 20_000_000, 1e-6)
    assert not rate_below(0, 10, 0.0)


def test_separable_qutrit_products():
    sep = make_reference_states(Sampler.SEPARABLE_HAAR_PRODUCT, 2, block_rng(0, 0, 0), 20, atom_dim=3)
    assert sep.shape == (20, 9)
    np.testing.assert_allclose(entanglement_entropy(sep, 3), 0.0, atol=1e-10)
    for kind in (Sampler.MAX_ENTANGLED, Sampler.GHZ_ORBIT):
        with pytest.raises(ValueError):
            make_reference_states(kind, 2, block_rng(0, 0, 0), 2, atom_dim=3)


def test_tabulated_tolerances():
    pa, te, ie = (ConstraintKind.FIXED_PER_ATOM_ENERGY, ConstraintKind.FIXED_TOTAL_ENERGY,
                  ConstraintKind.FIXED_INITIAL_ENTROPY)
    assert default_tolerance(pa, 2, 0.4) == 0.005
    assert default_tolerance(pa, 3, -0.4) == 0.02 and default_tolerance(pa, 3, 0.2) == 0.01
    assert default_tolerance(te, 2, 0.4) == 2e-4 and default_tolerance(te, 2, 0.0) == 1e-4
    assert default_tolerance(te, 3, 0.0) == 1e-5 and default_tolerance(te, 3, -0.2) == 5e-5
    assert default_tolerance(te, 3, 0.4) == 0.01
    assert default_tolerance(ie, 2, 1.0) == 0.002 and default_tolerance(ie, 2, 1.2) == 0.0005
    assert default_tolerance(ie, 2, 1.4) == 0.0005 and default_tolerance(ie, 2, 1.6) == 0.002
    with pytest.raises(ValueError):
        default_tolerance(pa, 4, 0.0)


def test_filter_keeps_only_states_inside_the_window():
    psi = sample_haar_pure(4, block_rng(0, 0, 0), 20000)
    c = Constraint(ConstraintKind.FIXED_PER_ATOM_ENERGY, 0.0, 0.05)
    res = filter_constraint(psi, c, 2)
    e = atom_energies_pure(res.accepted, 2)
    assert len(res.accepted) > 0 and np.all(np.abs(e) <= 0.05)
    assert res.rate == pytest.approx(len(res.accepted) / 20000)
    with pytest.raises(AcceptanceRateError):
        filter_constraint(psi, Constraint(ConstraintKind.FIXED_TOTAL_ENERGY, 0.0, 1e-9), 2, min_rate=1e-3)


def test_constrained_blocks_satisfy_their_constraint():
    for kind, value, n in ((ConstraintKind.FIXED_PER_ATOM_ENERGY, 0.2, 2), (ConstraintKind.FIXED_TOTAL_ENERGY, -0.2, 3)):
        c = Constraint(kind, value, default_tolerance(kind, n, value))
        spec = EnsembleSpec(Sampler.HAAR_PURE, 10, 0, c, 2, n)
        states, cand = draw_block(spec, 0, 0)
        assert cand == BLOCK_SIZE
        e = atom_energies_pure(states, n)
        q = e if kind is ConstraintKind.FIXED_PER_ATOM_ENERGY else e.mean(axis=1)
        assert np.all(np.abs(q - value) <= c.tol + 1e-15)
        np.testing.assert_allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-12)


def test_mixed_entropy_constraint():
    c = Constraint(ConstraintKind.FIXED_INITIAL_ENTROPY, 1.4, 0.01)
    draw = draw_ensemble(EnsembleSpec(Sampler.GINIBRE_MIXED, 40, 3, c))
    ent = -np.sum([np.where(w > 0, w * np.log2(np.where(w > 0, w, 1)), 0) for w in np.linalg.eigvalsh(draw.states)],
                  axis=1)
    assert np.all(np.abs(ent - 1.4) <= 0.01)
    assert 0 < draw.acceptance_rate < 1


def test_draws_are_deterministic_and_independent_of_the_map():
    spec = EnsembleSpec(Sampler.HAAR_PURE, 3 * BLOCK_SIZE // 2, seed=11, n_subsystems=3)
    a = draw_ensemble(spec, stream=5)
    b = draw_ensemble(spec, stream=5)
    with ThreadPoolExecutor(3) as pool:
        c = draw_ensemble(spec, stream=5, map_fn=pool.map, wave=3)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.states, c.states)
    assert len(a.states) == spec.size
    d = draw_ensemble(spec, stream=6)
    assert not np.allclose(a.states[:10], d.states[:10])


def test_constrained_draw_reports_acceptance_rate():
    c = Constraint(ConstraintKind.FIXED_PER_ATOM_ENERGY, 0.0, 0.02)
    spec = EnsembleSpec(Sampler.HAAR_PURE, 300, 1, c)
    draw = draw_ensemble(spec)
    assert len(draw.states) == 300
    assert draw.acceptance_rate == pytest.approx(draw.accepted / draw.candidates)
    assert 0.001 < draw.acceptance_rate < 0.05


@pytest.mark.parametrize("kwargs", [
    dict(sampler=Sampler.GINIBRE_MIXED, n_subsystems=3),
    dict(sampler=Sampler.MAX_ENTANGLED, atom_dim=3),
    dict(sampler=Sampler.HAAR_PURE, size=0),
    dict(sampler=Sampler.HAAR_PURE, constraint=Constraint(ConstraintKind.FIXED_INITIAL_ENTROPY, 1.0, 0.01)),
    dict(sampler=Sampler.HAAR_PURE, atom_dim=3, constraint=Constraint(ConstraintKind.FIXED_TOTAL_ENERGY, 0.0, 0.01)),
])
def test_invalid_ensemble_specs(kwargs):
    with pytest.raises(ValueError):
        EnsembleSpec(**kwargs)
