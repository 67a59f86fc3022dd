import numpy as np
import pytest
from scipy.linalg import expm

from onergate.atom import AtomSpec, Manifold, basis_index, mhz
from onergate.drive import DriveConfig, DrivenHamiltonian, rwa_hamiltonian
from onergate.dynamics import (
    collapse_operators,
    evolve,
    extract_nuclear_rabi,
    ground_state,
    scattered_photons,
)
from onergate.propagation import (
    DecayMap,
    NumericalError,
    coupled_blocks,
    magnus_propagator,
    magnus_slices,
    period_propagator,
    period_slices,
    rk_propagator,
    unitarity_residual,
)

CFG = DriveConfig(500.0, mhz(20), 1.85)


def small_hamiltonian(phase=0.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((6, 6))
    b = rng.standard_normal((6, 6))
    return DrivenHamiltonian(a + a.T, b + b.T, 1.3, phase)


# --- propagators -----------------------------------------------------------------------


def test_coupled_blocks():
    m = np.zeros((5, 5))
    m[0, 3] = m[3, 0] = 1
    m[1, 2] = m[2, 1] = 1
    blocks = coupled_blocks(m)
    assert sorted(map(tuple, blocks)) == [(0, 3), (1, 2), (4,)]
    assert [list(b) for b in coupled_blocks(np.zeros((3, 3)))] == [[0, 1, 2]]


@pytest.mark.parametrize("phase", [0.0, 0.4])
def test_magnus_matches_rk_small_system(phase):
    ham = small_hamiltonian(phase)
    ref = rk_propagator(ham, 0.0, ham.period, rtol=1e-12, atol=1e-13)
    u = magnus_propagator(ham, 0.0, ham.period, step_factor=0.05)
    assert np.abs(u - ref).max() < 1e-9
    assert unitarity_residual(u) < 1e-12


def test_magnus_is_fourth_order():
    ham = small_hamiltonian(0.4)
    ref = rk_propagator(ham, 0.0, ham.period, rtol=1e-12, atol=1e-13)
    e1 = np.abs(magnus_propagator(ham, 0.0, ham.period, step_factor=0.4) - ref).max()
    e2 = np.abs(magnus_propagator(ham, 0.0, ham.period, step_factor=0.2) - ref).max()
    assert 12 < e1 / e2 < 20


def test_time_symmetric_halving_matches_direct_slicing():
    ham = small_hamiltonian(0.0)
    fast = period_slices(ham, 8, step_factor=0.1)
    direct = magnus_slices(ham, 0.0, ham.period, 8, step_factor=0.1)
    assert np.abs(fast.unitaries - direct.unitaries).max() < 1e-10
    # period_propagator uses two slices, hence a different sub-step grid
    assert np.abs(fast.total() - period_propagator(ham, 0.1)).max() < 1e-8


def test_slices_compose_to_interval_propagator():
    ham = small_hamiltonian(0.4)
    s = magnus_slices(ham, 0.2, 1.0, 4, step_factor=0.1)
    assert s.dt == pytest.approx(0.2)
    assert np.abs(s.total() - magnus_propagator(ham, 0.2, 1.0, 0.1)).max() < 1e-8
    with pytest.raises(ValueError):
        magnus_slices(ham, 1.0, 0.0)
    np.testing.assert_array_equal(magnus_slices(ham, 0.5, 0.5, 2).unitaries[1], np.eye(6))


def test_atom_period_propagator_step_convergence(spec):
    ham = rwa_hamiltonian(spec, CFG.with_(period=0.3))
    u1 = period_propagator(ham, 2.0)
    u2 = period_propagator(ham, 1.0)
    assert unitarity_residual(u1) < 1e-10
    assert np.abs(u1 - u2).max() < 1e-6


# --- decay map ---------------------------------------------------------------------------


def liouvillian_decay(gamma, n_spin, n_channels):
    dim = n_spin * (n_channels + 1)
    lv = np.zeros((dim * dim, dim * dim), dtype=complex)
    eye = np.eye(dim)
    for c in range(n_channels):
        op = np.zeros((dim, dim))
        for m in range(n_spin):
            op[m, n_spin * (c + 1) + m] = 1
        cdc = op.T @ op
        # row-major vec: vec(A X B) = (A ⊗ B^T) vec(X)
        lv += gamma * (np.kron(op, op) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T))
    return lv


def test_decay_map_matches_lindblad_exponential():
    gamma, n_spin, n_ch, t = 0.7, 2, 3, 1.3
    rng = np.random.default_rng(3)
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    ref = (expm(t * liouvillian_decay(gamma, n_spin, n_ch)) @ rho.ravel()).reshape(8, 8)
    dm = DecayMap(gamma, n_spin, n_ch)
    np.testing.assert_allclose(dm.apply(rho, t), ref, atol=1e-13)
    np.testing.assert_allclose(dm.apply_diagonal(np.diag(rho).real, t), np.diag(ref).real, atol=1e-13)
    np.testing.assert_array_equal(DecayMap(0.0, 2, 3).apply(rho, t), rho)


def test_collapse_operators(spec):
    ops = collapse_operators(spec)
    assert len(ops) == 3
    total = sum(c.T @ c for c in ops)
    np.testing.assert_array_equal(total, np.diag([0.0] * 10 + [1.0] * 30))


# --- master equation ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def short_traj(spec):
    return evolve(spec, CFG, horizon=6.0)


def test_trajectory_invariants(short_traj):
    tr = short_traj
    assert tr.trace_error < 1e-10
    assert tr.hermiticity_error < 1e-12
    assert tr.min_eigenvalue > -1e-10
    np.testing.assert_allclose(tr.strobe_times, 1.85 * np.arange(len(tr.strobe_index)), atol=1e-12)
    assert tr.times[1] <= 0.005 + 1e-12
    assert tr.populations.min() > -1e-12
    assert tr.other_states_leakage.min() > -1e-9


def test_closed_evolution_preserves_purity(spec):
    tr = evolve(spec, CFG, horizon=2.0, closed=True)
    np.testing.assert_allclose(tr.purity, 1.0, atol=1e-10)


def test_magnus_split_matches_rk(spec):
    cfg = CFG.with_(period=0.4)
    a = evolve(spec, cfg, horizon=0.8, sample_dt=0.005)
    b = evolve(spec, cfg, horizon=0.8, sample_dt=0.005, method="rk", rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.times, b.times, atol=1e-12)
    assert np.abs(a.populations - b.populations).max() < 1e-6
    assert np.abs(a.final_state - b.final_state).max() < 1e-6


def test_step_factor_halving_converged(spec):
    a = evolve(spec, CFG, horizon=4.0)
    b = evolve(spec, CFG, horizon=4.0, step_factor=1.0)
    assert np.abs(a.populations - b.populations).max() < 1e-6


def test_no_hyperfine_conserves_nuclear_projection():
    spec = AtomSpec(hyperfine_a=0.0, quadrupole_q=0.0)
    cfg = DriveConfig(500.0, mhz(20), 1.85, detuning=mhz(-700))
    tr = evolve(spec, cfg, horizon=4.0)
    p = tr.populations[:, [basis_index(spec, e, mj, -4.5) for e, mj in
                           ((Manifold.S, 0), (Manifold.P, -1), (Manifold.P, 0), (Manifold.P, 1))]]
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert tr.flip_probability < 1e-20


def test_zero_drive_is_stationary(spec):
    tr = evolve(spec, CFG.with_(omega_e=0.0), horizon=3.0)
    np.testing.assert_allclose(tr.populations, np.broadcast_to(tr.populations[0], tr.populations.shape), atol=1e-13)


def test_excited_population_decays_exponentially(spec):
    rho0 = np.zeros((40, 40), dtype=complex)
    k = basis_index(spec, Manifold.P, -1, -4.5)
    rho0[k, k] = 1
    tr = evolve(spec, CFG.with_(omega_e=0.0), rho0=rho0, horizon=20.0, sample_dt=0.05, max_slice=0.05)
    np.testing.assert_allclose(tr.excited_occupation, np.exp(-spec.gamma * tr.times), atol=1e-10)
    # it decays only into |S,0,m_I> with unchanged m_I: the hyperfine mixing at 500 G is coherent
    assert tr.populations[-1, :10].sum() == pytest.approx(1 - np.exp(-spec.gamma * tr.times[-1]), abs=1e-10)


def test_initial_state_validation(spec):
    with pytest.raises(ValueError):
        evolve(spec, CFG, rho0=np.eye(40), horizon=1.0)
    with pytest.raises(ValueError):
        evolve(spec, CFG, rho0=np.zeros(5), horizon=1.0)
    with pytest.raises(ValueError):
        evolve(spec, CFG, horizon=0.001, sample_dt=0.005)
    with pytest.raises(ValueError):
        evolve(spec, CFG, horizon=1.0, method="euler")
    vec = np.zeros(40)
    vec[0] = 2.0
    tr = evolve(spec, CFG.with_(omega_e=0.0), rho0=vec, horizon=0.1)
    assert tr.initial_population[0] == pytest.approx(1.0)
    np.testing.assert_array_equal(ground_state(spec)[0], np.eye(40)[0])


def test_trace_abort_raises(spec, monkeypatch):
    import onergate.dynamics as dyn

    monkeypatch.setattr(dyn, "TRACE_ABORT", -1.0)
    with pytest.raises(NumericalError):
        evolve(spec, CFG, horizon=0.1)


# --- Rabi extraction ---------------------------------------------------------------------------


def test_rabi_from_sine_squared():
    omega = 2 * np.pi * 0.05
    t = 1.85 * np.arange(60)
    p = np.sin(omega * t / 2) ** 2
    est = extract_nuclear_rabi((t, p))
    assert est.resolved and est.consistent
    assert est.omega_n == pytest.approx(omega, rel=2e-3)
    assert est.fourier_omega == pytest.approx(omega, rel=0.05)


def test_rabi_unresolved_without_peak():
    t = np.arange(20.0)
    assert not extract_nuclear_rabi((t, 0.3 * np.sin(t) ** 2)).resolved
    assert not extract_nuclear_rabi((t[:2], t[:2])).resolved


def test_scattered_photons(short_traj, spec):
    if short_traj.rabi.resolved:
        assert scattered_photons(short_traj) == pytest.approx(
            short_traj.max_excited * spec.gamma / short_traj.nuclear_rabi)
    else:
        with pytest.raises(ValueError):
            scattered_photons(short_traj)


def test_rabi_fit_when_first_maximum_is_beyond_the_record():
    t = 1.85 * np.arange(20)
    est = extract_nuclear_rabi((t, 0.98 * np.sin(0.04 * t) ** 2))
    assert est.source == "fit"
    assert est.omega_n == pytest.approx(0.08, rel=1e-6)
    peak = extract_nuclear_rabi((t, np.sin(0.05 * t) ** 2))
    assert peak.source == "peak"
