"""Amplitude-modulated optical drive on the ¹S₀ → ³P₁ transition in the rotating frame."""
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants as const

from .atom import AtomSpec, Manifold, atom_hamiltonian, basis_index, excited_block_index, excited_eigenstates, h_zeeman
from .quantum import kron

TWO_PI = 2.0 * np.pi
#: below this field (G) the (m_J, m_I) labels used by the auto frequency are poorly defined
PASCHEN_BACK_WARN_FIELD = 100.0
#: minimum dominant-character weight accepted when labelling an excited eigenstate
LABEL_OVERLAP_MIN = 0.5


class AmbiguousLabelError(ValueError):
    """An excited eigenstate could not be identified by its dominant (m_J, m_I) character."""


@dataclass(frozen=True)
class DriveConfig:
    """Drive parameters.

    ``detuning`` is the rotating-frame detuning Δ = ω − ω₀ in rad/µs, or ``None``
    to place the laser midway between the two addressed transitions.
    """

    b_field: float
    omega_e: float
    period: float
    theta: float = np.pi / 2
    detuning: float = None
    envelope_phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("modulation period must be positive")
        if self.omega_e < 0:
            raise ValueError("electronic Rabi frequency must be non-negative")
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError("polarization angle must lie in [0, pi]")
        if self.b_field < 0:
            raise ValueError("magnetic field magnitude must be non-negative")

    @property
    def auto_detuning(self):
        return self.detuning is None

    def with_(self, **changes):
        return replace(self, **changes)

    def resolved(self, spec=None):
        """Copy with the auto detuning replaced by its numeric value."""
        if self.detuning is not None:
            return self
        _, delta = auto_laser_frequency(spec or AtomSpec(), self.b_field)
        return replace(self, detuning=delta)


def modulation(t, period, phase=0.0):
    """Normalised envelope (1 − cos(2πt/T + φ))/2 in [0, 1]."""
    return 0.5 * (1.0 - np.cos(TWO_PI * np.asarray(t, dtype=float) / period + phase))


def envelope(config, t):
    """Time-dependent electronic Rabi frequency Ω_E(t)."""
    return config.omega_e * modulation(t, config.period, config.envelope_phase)


def electronic_coupling(spec, theta):
    """Electronic part of the dipole coupling for unit Rabi frequency (n_e x n_e)."""
    if spec.excited_j != 1:
        raise ValueError("the dipole coupling is defined for a J=1 excited manifold")
    c = np.zeros((spec.n_electronic, spec.n_electronic), dtype=complex)
    s = 0
    c[s, 1 + 1] = np.cos(theta)  # P, m_J = 0
    c[s, 1 + 0] = np.sin(theta) / np.sqrt(2)  # P, m_J = -1
    c[s, 1 + 2] = -np.sin(theta) / np.sqrt(2)  # P, m_J = +1
    return 0.5 * (c + c.conj().T)


def drive_coupling(spec, theta):
    """Dipole coupling for unit Rabi frequency, identity on the nuclear spin."""
    return kron(electronic_coupling(spec, theta), np.eye(spec.n_spin))


def h_atom_field(config, t, spec=None):
    spec = spec or AtomSpec()
    return envelope(config, t) * drive_coupling(spec, config.theta)


@dataclass(frozen=True, eq=False)
class DrivenHamiltonian:
    """H(t) = h0 + g(t)·v with g(t) = (1 − cos(2πt/T + φ))/2."""

    h0: np.ndarray
    v: np.ndarray
    period: float
    phase: float = 0.0

    def modulation(self, t):
        return modulation(t, self.period, self.phase)

    def __call__(self, t):
        return self.h0 + self.modulation(t) * self.v

    @property
    def dim(self):
        return self.h0.shape[0]


def rwa_hamiltonian(spec, config, closed_system_check=True):
    """Assemble the rotating-frame Hamiltonian for ``config`` (auto detuning resolved)."""
    cfg = config.resolved(spec)
    if closed_system_check:
        check_rwa(cfg)
    h0 = atom_hamiltonian(spec, cfg.b_field, cfg.detuning)
    v = cfg.omega_e * drive_coupling(spec, cfg.theta)
    return DrivenHamiltonian(h0, v, cfg.period, cfg.envelope_phase)


def check_rwa(config):
    """Warn when the modulation is not slow compared with the optical detuning."""
    if config.detuning and config.period < 10 * TWO_PI / abs(config.detuning):
        warnings.warn(
            f"modulation period {config.period} us is shorter than 10 optical detuning periods; "
            "the rotating-wave description may be inaccurate",
            stacklevel=3,
        )


def labelled_excited_energy(spec, b_field, m_j, m_i, eig=None):
    """Excited eigen-energy whose eigenvector is dominated by |P, m_J, m_I>."""
    w, v = eig if eig is not None else excited_eigenstates(spec, b_field)
    k = excited_block_index(spec, m_j, m_i)
    weights = np.abs(v[k, :]) ** 2
    j = int(np.argmax(weights))
    if weights[j] < LABEL_OVERLAP_MIN or np.abs(v[:, j]).argmax() != k:
        raise AmbiguousLabelError(
            f"no excited eigenstate at B={b_field} G is dominated by |P,{m_j},{m_i}> (weight {weights[j]:.3f})"
        )
    return w[j]


def transition_frequencies(spec, b_field, m_i_pair=(-4.5, -2.5), m_j=-1):
    """Optical transition frequencies |S,0,m_I> -> |P,m_J,m_I> for the addressed pair."""
    if b_field < PASCHEN_BACK_WARN_FIELD:
        warnings.warn(
            f"B={b_field} G is below {PASCHEN_BACK_WARN_FIELD} G; (m_J, m_I) labels are strongly mixed",
            stacklevel=3,
        )
    eig = excited_eigenstates(spec, b_field)
    hz = np.diag(h_zeeman(spec, b_field)).real
    out = []
    for m in m_i_pair:
        e_s = hz[basis_index(spec, Manifold.S, 0, m)]
        out.append(spec.omega0 + labelled_excited_energy(spec, b_field, m_j, m, eig) - e_s)
    return np.array(out)


def auto_laser_frequency(spec, b_field):
    """Laser frequency midway between the m_I = −9/2 and −5/2 transitions.

    Returns ``(omega, delta)`` with the rotating-frame detuning
    ``delta = omega − omega0`` used by :func:`atom.h_electronic`, so that both
    addressed transitions are detuned by equal and opposite amounts.
    """
    nu = transition_frequencies(spec, b_field)
    omega = 0.5 * (nu[0] + nu[1])
    return omega, omega - spec.omega0


def addressed_detunings(spec, b_field, omega=None):
    """Detunings ω_transition − ω of the two addressed lines from the laser."""
    nu = transition_frequencies(spec, b_field)
    if omega is None:
        omega = 0.5 * (nu[0] + nu[1])
    return nu - omega


@dataclass(frozen=True)
class IntensityConversion:
    """Rabi frequency <-> laser intensity via |ħΩ| = D·sqrt(2I/(ε₀c)).

    ``dipole_au`` is the transition dipole moment in atomic units (e·a₀),
    including the Wigner factor 1/√3. With ``cyclic_frequency=True`` (the
    default) the cyclic frequency Ω/2π is inserted for Ω, which is the
    convention behind the commonly quoted 1, 4 and 10 W/cm² for
    Ω/2π = 20, 40 and 60 MHz; set it to ``False`` for the angular form.
    """

    dipole_au: float = 0.151 / np.sqrt(3)
    cyclic_frequency: bool = True

    def __post_init__(self):
        if not self.dipole_au > 0:
            raise ValueError("dipole moment must be positive")

    @property
    def dipole_si(self):
        return self.dipole_au * const.e * const.physical_constants["Bohr radius"][0]

    def _hz_factor(self):
        # rad/µs -> the frequency inserted in ħΩ, in s^-1
        return 1e6 / TWO_PI if self.cyclic_frequency else 1e6

    def rabi_to_intensity(self, omega_e):
        """Ω_E in rad/µs -> intensity in W/cm²."""
        omega_e = np.asarray(omega_e, dtype=float)
        if np.any(omega_e < 0):
            raise ValueError("Rabi frequency must be non-negative")
        field_amp = const.hbar * omega_e * self._hz_factor() / self.dipole_si
        return 0.5 * const.epsilon_0 * const.c * field_amp**2 * 1e-4

    def intensity_to_rabi(self, intensity):
        """Intensity in W/cm² -> Ω_E in rad/µs."""
        intensity = np.asarray(intensity, dtype=float)
        if np.any(intensity < 0):
            raise ValueError("intensity must be non-negative")
        field_amp = np.sqrt(2.0 * intensity * 1e4 / (const.epsilon_0 * const.c))
        return field_amp * self.dipole_si / const.hbar / self._hz_factor()


def rabi_to_intensity(omega_e, conversion=IntensityConversion()):
    return conversion.rabi_to_intensity(omega_e)


def intensity_to_rabi(intensity, conversion=IntensityConversion()):
    return conversion.intensity_to_rabi(intensity)
