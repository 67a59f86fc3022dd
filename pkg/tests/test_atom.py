import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onergate.atom import (
    AtomSpec,
    BasisState,
    Manifold,
    NqiTensor,
    atom_hamiltonian,
    basis_index,
    basis_states,
    breit_rabi_scan,
    cluster_degeneracies,
    corrected_transition_energy,
    electronic_j_operator,
    electronic_reduced_state,
    excited_eigenstates,
    excited_projector,
    h_electronic,
    h_hyperfine,
    h_zeeman,
    hyperfine_cluster_energy,
    lande_g_j,
    nqi_from_electronic_state,
    nqi_trajectory,
    nuclear_spin_hamiltonian,
    nuclear_spin_operator,
    quadrupole_energy_correction,
    state_from_index,
    transition_amplitudes,
)
from onergate.quantum import commutator, hermiticity_residual

from onergate.atom import mhz


def pure(v):
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


# --- basis and constants -------------------------------------------------------------


def test_default_constants(spec):
    assert spec.g_j == 1.5
    assert lande_g_j(1, 1, 1) == 1.5
    assert spec.g_i == -1.0928
    assert spec.hyperfine_a == mhz(-260)
    assert spec.quadrupole_q == mhz(-35)
    assert spec.gamma == mhz(7.48e-3)
    assert spec.dim == 40 and spec.n_excited == 30


def test_mu_constants_match_codata(spec):
    # CODATA 2018: mu_B/h = 13.996 244 936 GHz/T, mu_N/h = 7.622 593 2291 MHz/T
    assert spec.mu_b / (2 * np.pi) == pytest.approx(13.996244936e3 * 1e-4, rel=1e-10)
    assert spec.mu_n / (2 * np.pi) == pytest.approx(7.6225932291 * 1e-4, rel=1e-10)


def test_rejects_spin_without_quadrupole_moment():
    with pytest.raises(ValueError):
        AtomSpec(nuclear_spin=0.5)


def test_basis_index_bijection(spec):
    states = basis_states(spec)
    assert len(states) == 40
    idx = [basis_index(spec, s.manifold, s.m_j, s.m_i) for s in states]
    assert idx == list(range(40))
    assert all(state_from_index(spec, k) == s for k, s in enumerate(states))
    assert basis_index(spec, Manifold.S, 0, -4.5) == 0
    assert basis_index(spec, Manifold.P, -1, -4.5) == 10
    assert basis_index(spec, Manifold.P, 1, 4.5) == 39
    assert BasisState(Manifold.P, -1, -2.5).label() == "|P,-1,-5/2>"


def test_basis_index_rejects_bad_labels(spec):
    with pytest.raises(ValueError):
        basis_index(spec, Manifold.S, 1, 0.5)
    with pytest.raises(ValueError):
        basis_index(spec, Manifold.P, 0, 5.5)


# --- Hamiltonian parts ----------------------------------------------------------------


def test_h_electronic(spec):
    assert np.all(h_electronic(spec, 0.0) == 0)
    h = h_electronic(spec, mhz(1))
    assert np.trace(h).real == pytest.approx(-30 * mhz(1))
    assert h[0, 0] == 0
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0


def test_h_zeeman(spec):
    assert np.all(h_zeeman(spec, 0.0) == 0)
    b = 250.0
    h = h_zeeman(spec, b)
    for m in spec.m_i_values():
        k = basis_index(spec, Manifold.S, 0, m)
        assert h[k, k].real == pytest.approx(-spec.g_i * spec.mu_n * b * m)
    # g_I < 0 puts m_I = -9/2 lowest in the ground manifold
    ground = np.diag(h).real[:10]
    assert np.argmin(ground) == 0
    k = basis_index(spec, Manifold.P, -1, 0.5)
    assert h[k, k].real == pytest.approx(-spec.g_j * spec.mu_b * b - spec.g_i * spec.mu_n * b * 0.5)
    with pytest.raises(ValueError):
        h_zeeman(spec, -1.0)


def test_hyperfine_vanishes_on_ground_and_is_hermitian(spec):
    h = h_hyperfine(spec)
    assert np.all(h[:10, :] == 0) and np.all(h[:, :10] == 0)
    assert hermiticity_residual(h) <= 1e-12


def test_hyperfine_conserves_total_m(spec):
    fz = electronic_j_operator(spec, "z") + nuclear_spin_operator(spec, "z")
    h = h_hyperfine(spec)
    assert np.abs(commutator(h, fz)).max() <= 1e-12 * np.abs(h).max()


def test_zero_field_clusters_match_casimir(spec):
    w, _ = excited_eigenstates(spec, 0.0)
    energies, mult = cluster_degeneracies(w)
    assert len(energies) == 3
    expected = {f: hyperfine_cluster_energy(spec, f) for f in (3.5, 4.5, 5.5)}
    by_mult = dict(zip(mult, energies))
    assert sorted(mult) == [8, 10, 12]
    for f, e in expected.items():
        assert by_mult[int(2 * f + 1)] == pytest.approx(e, rel=1e-9)


def test_atom_hamiltonian_additive_and_hermitian(spec):
    b, d = 321.0, mhz(-1500)
    h = atom_hamiltonian(spec, b, d)
    np.testing.assert_array_equal(h, h_electronic(spec, d) + h_zeeman(spec, b) + h_hyperfine(spec))
    assert hermiticity_residual(h) <= 1e-12
    np.testing.assert_array_equal(atom_hamiltonian(spec, 0.0, 0.0), h_hyperfine(spec))


# --- Breit-Rabi -------------------------------------------------------------------------


def test_breit_rabi_lowest_states_at_200G(spec):
    scan = breit_rabi_scan(spec, [200.0])
    for k, m in enumerate((-4.5, -3.5, -2.5)):
        m_j, m_i, _ = scan.dominant(0, k)
        w = scan.projections(k)[0][basis_index(spec, Manifold.P, -1, m) - 10]
        assert (m_j, m_i) == (-1, m)
        assert w > 0.7


def test_breit_rabi_large_field_purity(spec):
    scan = breit_rabi_scan(spec, [1e4])
    for k, m in enumerate((-4.5, -3.5, -2.5)):
        m_j, m_i, w = scan.dominant(0, k)
        assert (m_j, m_i) == (-1, m) and w > 0.99


def test_breit_rabi_continuity_and_sorted(spec):
    grid = np.arange(0.0, 301.0, 1.0)
    scan = breit_rabi_scan(spec, grid)
    assert np.all(np.diff(scan.energies, axis=1) >= 0)
    assert scan.track_overlap[2:].min() >= 0.99  # B=0 -> 1 G leaves degenerate clusters
    curves = scan.curve_energies()
    assert np.abs(np.diff(curves, axis=0)).max() < mhz(5)


def test_breit_rabi_rejects_unsorted(spec):
    with pytest.raises(ValueError):
        breit_rabi_scan(spec, [10.0, 5.0])


# --- quadrupole perturbation theory ------------------------------------------------------


def test_energy_correction_pure_zeeman():
    for m in np.arange(-4.5, 5):
        assert quadrupole_energy_correction(4.5, m, 2.0, 0.0) == -2.0 * m


def test_transition_energy_formulas():
    g, q = 1.3, 0.01
    for m in np.arange(-2.5, 5):
        e = lambda x: quadrupole_energy_correction(4.5, x, g, q)
        assert corrected_transition_energy(1, m, g, q) == pytest.approx(e(m) - e(m - 1))
        assert corrected_transition_energy(2, m, g, q) == pytest.approx(e(m) - e(m - 2))
    assert corrected_transition_energy(1, 0.5, 0.0, 1.0) == pytest.approx(1.5 * (2 * 0.5 - 1))
    with pytest.raises(ValueError):
        corrected_transition_energy(3, 0.5, g, q)
    with pytest.raises(ValueError):
        quadrupole_energy_correction(4.5, 5.5, g, q)


def _relative_pt_error(q_tensor, gb=1.0, spin=4.5):
    w = np.linalg.eigvalsh(nuclear_spin_hamiltonian(spin, gb, q_tensor))
    pert = np.sort([quadrupole_energy_correction(spin, m, gb, q_tensor[2, 2]) for m in np.arange(-spin, spin + 1)])
    return np.max(np.abs(w - pert) / np.abs(pert))


def test_perturbation_theory_exact_for_cylindrical_tensor():
    q = 1e-3
    cyl = np.diag([-q / 2, -q / 2, q])
    assert _relative_pt_error(cyl) <= 10 * q**2


def test_perturbation_error_is_second_order():
    base = np.array([[-0.5, 0.3, 0.2], [0.3, -0.5, 0.1], [0.2, 0.1, 1.0]])
    e1 = _relative_pt_error(1e-3 * base)
    e2 = _relative_pt_error(1e-4 * base)
    assert e1 / e2 == pytest.approx(100, rel=0.02)


# --- NQI tensor and amplitudes ---------------------------------------------------------------


def test_nqi_tensor_validation():
    with pytest.raises(ValueError):
        NqiTensor(np.eye(3))
    with pytest.raises(ValueError):
        NqiTensor(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]))
    t = NqiTensor(np.diag([1.0, 1.0, -2.0]))
    assert t.is_cylindrical and t["zz"] == -2.0


def test_transition_amplitudes_closed_forms():
    q = NqiTensor(np.array([[0.1, 0.2, 0.3], [0.2, 0.4, 0.5], [0.3, 0.5, -0.5]]))
    a = transition_amplitudes(4.5, -3.5, q)
    assert a.alpha == pytest.approx(12.0)
    assert a.g_delta1 == pytest.approx(12.0 * (0.3 + 0.5j))
    b = transition_amplitudes(4.5, -2.5, q)
    assert b.beta == pytest.approx(3.0)
    assert b.g_delta2 == pytest.approx(3.0 * (0.1 - 0.4 + 0.4j))


def test_transition_amplitudes_cylindrical_vanish():
    a = transition_amplitudes(4.5, 0.5, NqiTensor(np.diag([1.0, 1.0, -2.0])))
    assert a.g_delta1 == 0 and a.g_delta2 == 0


def test_transition_amplitudes_out_of_range_is_no_transition():
    q = NqiTensor(np.array([[0.1, 0.2, 0.3], [0.2, 0.4, 0.5], [0.3, 0.5, -0.5]]))
    a = transition_amplitudes(4.5, -4.5, q)
    assert not a.delta1_allowed and not a.delta2_allowed
    assert a.g_delta1 == 0 and a.g_delta2 == 0
    b = transition_amplitudes(4.5, -3.5, q)
    assert b.delta1_allowed and not b.delta2_allowed and b.g_delta2 == 0


def test_reverse_amplitudes_are_conjugate():
    q = NqiTensor(np.array([[0.1, 0.2, 0.3], [0.2, 0.4, 0.5], [0.3, 0.5, -0.5]]))
    a = transition_amplitudes(4.5, 0.5, q)
    r = a.reverse()
    assert r.g_delta1 == np.conj(a.g_delta1) and r.g_delta2 == np.conj(a.g_delta2)


def test_nqi_from_ground_state_vanishes(spec):
    q = nqi_from_electronic_state(spec, pure([1, 0, 0, 0]))
    assert np.all(q.q_tensor == 0)


def test_nqi_from_mj_minus_one_is_cylindrical(spec):
    q = nqi_from_electronic_state(spec, pure([0, 1, 0, 0])).q_tensor
    a = q[0, 0]
    np.testing.assert_allclose(q, np.diag([a, a, -2 * a]), atol=1e-12 * abs(a))
    assert a != 0


def test_nqi_superposition_enables_delta_m_two(spec):
    q = NqiTensor(nqi_from_electronic_state(spec, pure([0, 1, 0, 1])).q_tensor)
    assert abs(q["xx"] - q["yy"]) > 0.1 * abs(spec.quadrupole_q) / 72
    amps = transition_amplitudes(4.5, -2.5, q)
    assert abs(amps.g_delta2) > 0 and amps.g_delta1 == 0


def test_nqi_rejects_non_density(spec):
    with pytest.raises(ValueError):
        nqi_from_electronic_state(spec, np.diag([1.0, 1.0, 0, 0]))
    with pytest.raises(ValueError):
        nqi_from_electronic_state(spec, np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(ValueError):
        nqi_from_electronic_state(spec, np.eye(2) / 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_nqi_symmetric_traceless_for_random_states(seed):
    spec = AtomSpec()
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    q = nqi_from_electronic_state(spec, rho).q_tensor
    scale = max(np.abs(q).max(), 1e-300)
    assert np.abs(q - q.T).max() <= 1e-12 * scale
    assert abs(np.trace(q)) <= 1e-12 * scale


def test_electronic_reduced_state_and_trajectory_diagnostic(spec):
    rho = np.zeros((40, 40), dtype=complex)
    k = basis_index(spec, Manifold.P, -1, -4.5)
    rho[k, k] = 1
    np.testing.assert_allclose(electronic_reduced_state(spec, rho), np.diag([0, 1, 0, 0]))
    with pytest.warns(UserWarning, match="heuristic"):
        traj = nqi_trajectory(spec, [rho, rho])
    assert traj.shape == (2, 3, 3)


def test_projector_helpers(spec):
    p = excited_projector(spec)
    assert np.trace(p).real == 30
