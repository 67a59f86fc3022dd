import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import unitary_group

from onergate.atom import ground_index, mhz
from onergate.drive import DriveConfig
from onergate.dynamics import evolve
from onergate.floquet import (
    FloquetScan,
    floquet_analysis,
    floquet_modes,
    fractional_power,
    mixture_measure,
    one_period_propagator,
    qubit_mixture,
    stroboscopic_operator,
)

CFG = DriveConfig(500.0, mhz(20), 1.85)


@pytest.mark.parametrize("period", [1.0, 0.37])
def test_modes_reconstruct_random_unitary(period):
    u = unitary_group.rvs(12, random_state=4)
    z, eps = floquet_modes(u, period)
    np.testing.assert_allclose(z.conj().T @ z, np.eye(12), atol=1e-12)
    np.testing.assert_allclose(fractional_power(z, eps, period, 1.0), u, atol=1e-12)
    assert np.all(eps > -np.pi / period) and np.all(eps <= np.pi / period)


def test_quasi_energies_of_known_hamiltonian():
    h = np.diag([0.3, -1.1, 2.0])
    period = 1.0
    z, eps = floquet_modes(expm(-1j * h * period), period)
    assert sorted(eps) == pytest.approx(sorted([0.3, -1.1, 2.0]))
    # -pi maps to the closed end of the zone
    _, eps_pi = floquet_modes(np.diag([-1.0, 1.0]).astype(complex), 1.0)
    assert sorted(eps_pi) == pytest.approx([0.0, np.pi])


def test_degenerate_modes_are_orthonormal():
    v = unitary_group.rvs(6, random_state=1)
    u = v @ np.diag(np.exp(-1j * np.array([0.5, 0.5, 0.5, -1.0, -1.0, 2.0]))) @ v.conj().T
    z, eps = floquet_modes(u)
    np.testing.assert_allclose(z.conj().T @ z, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(fractional_power(z, eps, 1.0, 1.0), u, atol=1e-12)


def test_rejects_non_unitary():
    with pytest.raises(ValueError):
        floquet_modes(2 * np.eye(3))


def test_fractional_power_composition():
    u = unitary_group.rvs(5, random_state=7)
    z, eps = floquet_modes(u, 2.0)
    half = fractional_power(z, eps, 2.0, 0.5)
    np.testing.assert_allclose(half @ half, u, atol=1e-12)
    np.testing.assert_allclose(fractional_power(z, eps, 2.0, 0.0), np.eye(5), atol=1e-12)
    np.testing.assert_allclose(fractional_power(z, eps, 2.0, -1.0), u.conj().T, atol=1e-12)


def test_mixture_measure_limits():
    assert mixture_measure(np.eye(4), 0, 1) == 0
    had = np.eye(4, dtype=complex)
    had[:2, :2] = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert mixture_measure(had, 0, 1) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def atom_floquet(spec):
    return floquet_analysis(spec, CFG)


def test_atom_floquet_reconstruction(atom_floquet, spec):
    f = atom_floquet
    np.testing.assert_allclose(f.reconstruct(), f.propagator, atol=1e-10)
    assert 0 <= f.mixture <= 1
    assert f.mixture == pytest.approx(qubit_mixture(spec, f.modes))
    top = f.top_modes(ground_index(spec, -4.5), ground_index(spec, -2.5))
    assert len(top) == 2 and all(0 <= o <= 1 for _, a, b in top for o in (a, b))


def test_stroboscopic_states_match_closed_evolution(atom_floquet, spec):
    psi0 = np.zeros(40, dtype=complex)
    psi0[ground_index(spec, -4.5)] = 1
    states = atom_floquet.stroboscopic_states(psi0, 4)
    tr = evolve(spec, CFG, horizon=4 * 1.85 + 1e-9, closed=True)
    pops = tr.populations[tr.strobe_index]
    np.testing.assert_allclose(np.abs(states) ** 2, pops, atol=1e-7)


def test_stroboscopic_operator_endpoints(atom_floquet, spec):
    s0 = stroboscopic_operator(spec, CFG, 0.0, floquet=atom_floquet)
    np.testing.assert_allclose(s0, np.eye(40), atol=1e-12)
    st = stroboscopic_operator(spec, CFG, 1.85, floquet=atom_floquet)
    np.testing.assert_allclose(st, np.eye(40), atol=1e-7)
    with pytest.raises(ValueError):
        stroboscopic_operator(spec, CFG, 2.0, floquet=atom_floquet)


def test_magnus_and_rk_period_propagators_agree(spec):
    cfg = CFG.with_(period=0.15)
    a = one_period_propagator(spec, cfg)
    b = one_period_propagator(spec, cfg, method="rk", rtol=1e-13, atol=1e-14)
    assert np.abs(a - b).max() < 1e-8


def test_scan_local_maxima():
    scan = FloquetScan(np.arange(5.0), np.array([0.1, 0.5, 0.2, 0.2, 0.9]), np.zeros((5, 1)), [[]] * 5)
    assert list(scan.local_maxima()) == [1]
    assert next(iter(scan.rows())) == {"T": 0.0, "mixture": 0.1}
