"""Floquet analysis of the closed (decay-free) modulated system.

U(T) is the one-period propagator, its eigenvectors |n> are the Floquet modes
and ε_n = −arg(λ_n)/T ∈ (−π/T, π/T] the quasi-energies. Fractional powers
U(T)^s use the first-zone branch, U(T)^s = Σ_n e^{−i ε_n s T} |n><n|.
"""
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.linalg import schur

from .atom import ground_index
from .drive import rwa_hamiltonian
from .parallel import parallel_map
from .propagation import (
    DEFAULT_STEP_FACTOR,
    NumericalError,
    magnus_propagator,
    period_propagator,
    rk_propagator,
    unitarity_residual,
)

UNITARITY_ABORT = 1e-6


def one_period_propagator(spec, config, method="magnus", step_factor=DEFAULT_STEP_FACTOR, rtol=1e-10, atol=1e-12):
    """U(T) of the rotating-frame Hamiltonian without decay."""
    ham = rwa_hamiltonian(spec, config)
    if method == "magnus":
        u = period_propagator(ham, step_factor)
    elif method == "rk":
        u = rk_propagator(ham, 0.0, ham.period, rtol=rtol, atol=atol)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = unitarity_residual(u)
    if res > UNITARITY_ABORT:
        raise NumericalError(f"one-period propagator unitarity residual {res:.2e}")
    return u


def floquet_modes(u_t, period=1.0):
    """Orthonormal Floquet modes (columns) and first-zone quasi-energies of a unitary.

    A complex Schur decomposition is used: for a unitary matrix the triangular
    factor is diagonal, and the Schur vectors are orthonormal even inside
    degenerate eigenspaces.
    """
    u_t = np.asarray(u_t, dtype=complex)
    if unitarity_residual(u_t) > UNITARITY_ABORT:
        raise ValueError("floquet_modes expects a unitary matrix")
    t, z = schur(u_t, output="complex")
    lam = np.diag(t)
    eps = -np.angle(lam) / period
    eps = np.where(eps <= -np.pi / period * (1 - 1e-15), eps + 2 * np.pi / period, eps)
    return z, eps


def mixture_measure(modes, i, j):
    """M = 2 Σ_n |<i|n><n|j>|² for basis indices ``i`` and ``j``."""
    modes = np.asarray(modes)
    return float(2.0 * np.sum(np.abs(modes[i, :] * np.conj(modes[j, :])) ** 2))


def qubit_mixture(spec, modes, m_a=-4.5, m_b=-2.5):
    return mixture_measure(modes, ground_index(spec, m_a), ground_index(spec, m_b))


def fractional_power(modes, quasi_energies, period, s):
    """U(T)^s on the first-zone branch."""
    return (modes * np.exp(-1j * quasi_energies * s * period)) @ modes.conj().T


@dataclass(eq=False)
class FloquetResult:
    period: float
    propagator: np.ndarray
    modes: np.ndarray
    quasi_energies: np.ndarray
    mixture: float

    def reconstruct(self):
        return fractional_power(self.modes, self.quasi_energies, self.period, 1.0)

    def power(self, s):
        return fractional_power(self.modes, self.quasi_energies, self.period, s)

    def stroboscopic_states(self, psi0, k_max):
        """ψ(kT) = U(T)^k ψ₀ for k = 0..k_max from the mode expansion."""
        c = self.modes.conj().T @ np.asarray(psi0, dtype=complex)
        k = np.arange(k_max + 1)
        phases = np.exp(-1j * np.outer(k, self.quasi_energies) * self.period)
        return (phases * c) @ self.modes.T

    def top_modes(self, i, j, count=2):
        """Modes with the largest |<i|n><n|j>|, with their overlaps |<i|n>|² and |<j|n>|²."""
        weight = np.abs(self.modes[i, :] * np.conj(self.modes[j, :]))
        order = np.argsort(weight)[::-1][:count]
        return [(int(n), float(abs(self.modes[i, n]) ** 2), float(abs(self.modes[j, n]) ** 2)) for n in order]


def floquet_analysis(spec, config, method="magnus", step_factor=DEFAULT_STEP_FACTOR):
    cfg = config.resolved(spec)
    u = one_period_propagator(spec, cfg, method=method, step_factor=step_factor)
    modes, eps = floquet_modes(u, cfg.period)
    return FloquetResult(cfg.period, u, modes, eps, qubit_mixture(spec, modes))


def propagator_to(spec, config, t, step_factor=DEFAULT_STEP_FACTOR):
    """U(t, 0) for 0 <= t <= T."""
    ham = rwa_hamiltonian(spec, config)
    return magnus_propagator(ham, 0.0, float(t), step_factor)


def stroboscopic_operator(spec, config, t, floquet=None, step_factor=DEFAULT_STEP_FACTOR):
    """S(t) = U(t) U(T)^{−t/T}, the intra-period factor of U(t) = S(t) U(T)^{t/T}."""
    cfg = config.resolved(spec)
    if not 0 <= t <= cfg.period:
        raise ValueError("t must lie within one modulation period")
    floquet = floquet or floquet_analysis(spec, cfg, step_factor=step_factor)
    return propagator_to(spec, cfg, t, step_factor) @ floquet.power(-t / cfg.period)


def stroboscopic_state(spec, config, t, psi0, step_factor=DEFAULT_STEP_FACTOR):
    """U(t) ψ₀ for 0 <= t < T."""
    cfg = config.resolved(spec)
    if not 0 <= t < cfg.period:
        raise ValueError("t must lie in [0, T)")
    return propagator_to(spec, cfg, t, step_factor) @ np.asarray(psi0, dtype=complex)


@dataclass(eq=False)
class FloquetScan:
    periods: np.ndarray
    mixture: np.ndarray
    quasi_energies: np.ndarray
    top_overlaps: list

    def local_maxima(self):
        m = self.mixture
        idx = [k for k in range(1, len(m) - 1) if m[k] >= m[k - 1] and m[k] > m[k + 1]]
        return np.array(idx, dtype=int)

    def rows(self):
        for k, period in enumerate(self.periods):
            row = {"T": float(period), "mixture": float(self.mixture[k])}
            for r, (n, oa, ob) in enumerate(self.top_overlaps[k], start=1):
                row[f"mode{r}"] = n
                row[f"mode{r}_overlap_m9_2"] = oa
                row[f"mode{r}_overlap_m5_2"] = ob
            yield row


def _scan_point(period, spec, config, step_factor):
    res = floquet_analysis(spec, config.with_(period=float(period)), step_factor=step_factor)
    i, j = ground_index(spec, -4.5), ground_index(spec, -2.5)
    return res.mixture, res.quasi_energies, res.top_modes(i, j)


def floquet_scan(spec, config, periods, threads=1, step_factor=DEFAULT_STEP_FACTOR):
    """Mixture measure and quasi-energies over a grid of modulation periods."""
    cfg = config.resolved(spec)
    periods = np.asarray(periods, dtype=float)
    out = parallel_map(partial(_scan_point, spec=spec, config=cfg, step_factor=step_factor), periods, threads)
    return FloquetScan(
        periods,
        np.array([o[0] for o in out]),
        np.array([o[1] for o in out]),
        [o[2] for o in out],
    )
