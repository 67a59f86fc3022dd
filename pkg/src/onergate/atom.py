"""Two-manifold ⁸⁷Sr model: ¹S₀ ground manifold plus the ³P₁ excited manifold.

Units are ħ = 1, angular frequencies in rad/µs, times in µs and magnetic
fields in Gauss. The product basis |n, m_J, m_I> is indexed as
``electronic_index * n_spin + spin_index`` with the electronic order
[S, P(m_J=-J), ..., P(m_J=+J)] and spin_index 0 <-> m_I = -I.
"""
import enum
import functools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .quantum import (
    ALGEBRA_TOL,
    angular_momentum_ops,
    as_half_integer,
    fix_phases,
    hermitian_eigendecompose,
    kron,
)

TWO_PI = 2.0 * np.pi

#: Bohr magneton over h, MHz/G (CODATA 2018: 13.996 244 936 GHz/T)
BOHR_MAGNETON_MHZ_PER_G = 1.3996244936
#: nuclear magneton over h, MHz/G (CODATA 2018: 7.622 593 2291 MHz/T)
NUCLEAR_MAGNETON_MHZ_PER_G = 7.6225932291e-4


def mhz(value):
    """Convert a frequency quoted in MHz to rad/µs."""
    return TWO_PI * value


def to_mhz(omega):
    """Convert rad/µs back to MHz."""
    return omega / TWO_PI


def lande_g_j(L, S, J):
    """Electronic Landé factor in the LS-coupling approximation (g_s = 2)."""
    return 1.0 + (J * (J + 1) + S * (S + 1) - L * (L + 1)) / (2.0 * J * (J + 1))


@dataclass(frozen=True)
class AtomSpec:
    """Physical constants of the ¹S₀/³P₁ system.

    All frequencies are angular (rad/µs); magnetons are given as angular
    frequency per Gauss. ``omega0`` is the bare optical transition frequency,
    zero in the rotating frame.
    """

    nuclear_spin: float = 4.5
    excited_j: int = 1
    excited_l: int = 1
    excited_s: int = 1
    g_j: float = None
    g_i: float = -1.0928
    hyperfine_a: float = mhz(-260.0)
    quadrupole_q: float = mhz(-35.0)
    gamma: float = mhz(7.48e-3)
    mu_b: float = mhz(BOHR_MAGNETON_MHZ_PER_G)
    mu_n: float = mhz(NUCLEAR_MAGNETON_MHZ_PER_G)
    omega0: float = 0.0

    def __post_init__(self):
        as_half_integer(self.nuclear_spin)
        if self.nuclear_spin <= 0.5:
            raise ValueError("a nuclear quadrupole moment requires I > 1/2")
        if int(self.excited_j) != self.excited_j or self.excited_j < 1:
            raise ValueError("the excited manifold must have integer J >= 1")
        if self.g_j is None:
            object.__setattr__(self, "g_j", lande_g_j(self.excited_l, self.excited_s, self.excited_j))
        if self.gamma < 0:
            raise ValueError("decay rate must be non-negative")

    @property
    def n_spin(self):
        return int(round(2 * self.nuclear_spin + 1))

    @property
    def n_electronic(self):
        return 1 + 2 * int(self.excited_j) + 1

    @property
    def dim(self):
        return self.n_spin * self.n_electronic

    @property
    def n_excited(self):
        return self.dim - self.n_spin

    def m_i_values(self):
        return np.arange(-self.nuclear_spin, self.nuclear_spin + 1)

    def m_j_values(self):
        return np.arange(-self.excited_j, self.excited_j + 1)


class Manifold(enum.Enum):
    S = "1S0"
    P = "3P1"


@dataclass(frozen=True)
class BasisState:
    manifold: Manifold
    m_j: int
    m_i: float

    def label(self):
        return f"|{self.manifold.name},{self.m_j:+d},{_fmt_half(self.m_i)}>"


def _fmt_half(m):
    twice = int(round(2 * m))
    return f"{twice:+d}/2" if twice % 2 else f"{twice // 2:+d}"


def electronic_index(spec, manifold, m_j=0):
    if manifold is Manifold.S:
        if m_j != 0:
            raise ValueError("the ground manifold only has m_J = 0")
        return 0
    if abs(m_j) > spec.excited_j or int(m_j) != m_j:
        raise ValueError(f"m_J={m_j} outside the excited manifold")
    return 1 + int(m_j + spec.excited_j)


def spin_index(spec, m_i):
    k = m_i + spec.nuclear_spin
    if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < spec.n_spin:
        raise ValueError(f"m_I={m_i} outside the nuclear spin multiplet")
    return int(round(k))


def basis_index(spec, manifold, m_j, m_i):
    """Global index of |manifold, m_J, m_I> in the product basis."""
    return electronic_index(spec, manifold, m_j) * spec.n_spin + spin_index(spec, m_i)


def ground_index(spec, m_i):
    return basis_index(spec, Manifold.S, 0, m_i)


def basis_states(spec):
    states = [BasisState(Manifold.S, 0, m) for m in spec.m_i_values()]
    for mj in spec.m_j_values():
        states += [BasisState(Manifold.P, int(mj), m) for m in spec.m_i_values()]
    return states


def state_from_index(spec, index):
    if not 0 <= index < spec.dim:
        raise IndexError(index)
    e, s = divmod(index, spec.n_spin)
    m_i = s - spec.nuclear_spin
    if e == 0:
        return BasisState(Manifold.S, 0, m_i)
    return BasisState(Manifold.P, int(e - 1 - spec.excited_j), m_i)


@dataclass(frozen=True, eq=False)
class _Operators:
    spin: object
    jvec: tuple  # electronic J components embedded with zeros on S
    excited_projector_e: np.ndarray
    ground_projector_e: np.ndarray


@functools.lru_cache(maxsize=8)
def _operators(nuclear_spin, excited_j):
    spin = angular_momentum_ops(nuclear_spin)
    jops = angular_momentum_ops(excited_j)
    n_e = 2 * int(excited_j) + 2

    def embed(a):
        out = np.zeros((n_e, n_e), dtype=complex)
        out[1:, 1:] = a
        return out

    jvec = tuple(embed(a) for a in (jops.jx, jops.jy, jops.jz))
    pe = embed(np.eye(n_e - 1))
    ge = np.zeros((n_e, n_e), dtype=complex)
    ge[0, 0] = 1.0
    return _Operators(spin, jvec, pe, ge)


def operators(spec):
    return _operators(spec.nuclear_spin, spec.excited_j)


def excited_projector(spec):
    ops = operators(spec)
    return kron(ops.excited_projector_e, np.eye(spec.n_spin))


def ground_projector(spec):
    ops = operators(spec)
    return kron(ops.ground_projector_e, np.eye(spec.n_spin))


def nuclear_spin_operator(spec, axis):
    """``I_axis`` embedded on every electronic state."""
    ops = operators(spec)
    comp = {"x": ops.spin.jx, "y": ops.spin.jy, "z": ops.spin.jz}[axis]
    return kron(np.eye(spec.n_electronic), comp)


def electronic_j_operator(spec, axis):
    """``J_axis`` on the excited manifold, zero on the ground manifold."""
    ops = operators(spec)
    comp = dict(zip("xyz", ops.jvec))[axis]
    return kron(comp, np.eye(spec.n_spin))


def i_dot_j(spec):
    ops = operators(spec)
    spin = ops.spin
    return sum(kron(je, si) for je, si in zip(ops.jvec, (spin.jx, spin.jy, spin.jz)))


def h_electronic(spec, detuning):
    """Rotating-frame electronic term ``-detuning`` on every excited basis state."""
    return -detuning * excited_projector(spec)


def h_zeeman(spec, b_field):
    """Zeeman term (g_J μ_B J_z - g_I μ_N I_z) B; J_z vanishes on the ground manifold."""
    if b_field < 0:
        raise ValueError("magnetic field magnitude must be non-negative")
    jz = electronic_j_operator(spec, "z")
    iz = nuclear_spin_operator(spec, "z")
    return b_field * (spec.g_j * spec.mu_b * jz - spec.g_i * spec.mu_n * iz)


def h_hyperfine(spec):
    """Magnetic-dipole plus electric-quadrupole hyperfine coupling on the excited manifold."""
    I, J = spec.nuclear_spin, spec.excited_j
    idj = i_dot_j(spec)
    pp = excited_projector(spec)
    quad = (1.5 * idj @ (2.0 * idj + pp) - I * (I + 1) * J * (J + 1) * pp) / (2 * I * J * (2 * I - 1) * (2 * J - 1))
    return spec.hyperfine_a * idj + spec.quadrupole_q * quad


def atom_hamiltonian(spec, b_field, detuning=0.0):
    """Static atomic Hamiltonian in the laser rotating frame."""
    return h_electronic(spec, detuning) + h_zeeman(spec, b_field) + h_hyperfine(spec)


def excited_block(spec, matrix):
    n = spec.n_spin
    return matrix[n:, n:]


def excited_eigenstates(spec, b_field):
    """Energies (ascending) and phase-fixed eigenvectors of the excited block of H_Z + H_HF."""
    h = excited_block(spec, h_zeeman(spec, b_field) + h_hyperfine(spec))
    w, v = hermitian_eigendecompose(h)
    return w, fix_phases(v)


def excited_label(spec, p_index):
    """(m_J, m_I) of an index into the excited block."""
    e, s = divmod(p_index, spec.n_spin)
    return int(e - spec.excited_j), s - spec.nuclear_spin


def excited_block_index(spec, m_j, m_i):
    return basis_index(spec, Manifold.P, m_j, m_i) - spec.n_spin


def hyperfine_cluster_energy(spec, f):
    """Zero-field energy of hyperfine level F from the Casimir substitution of I·J."""
    I, J = spec.nuclear_spin, spec.excited_j
    k = f * (f + 1) - I * (I + 1) - J * (J + 1)
    idj = k / 2
    quad = (1.5 * idj * (2 * idj + 1) - I * (I + 1) * J * (J + 1)) / (2 * I * J * (2 * I - 1) * (2 * J - 1))
    return spec.hyperfine_a * idj + spec.quadrupole_q * quad


def cluster_degeneracies(energies, rtol=1e-9):
    """Group sorted energies into clusters; returns (cluster energies, multiplicities)."""
    energies = np.sort(np.asarray(energies))
    scale = max(np.abs(energies).max(), 1.0)
    groups = [[energies[0]]]
    for e in energies[1:]:
        if abs(e - groups[-1][-1]) <= rtol * scale:
            groups[-1].append(e)
        else:
            groups.append([e])
    return np.array([np.mean(g) for g in groups]), np.array([len(g) for g in groups])


@dataclass(eq=False)
class BreitRabiScan:
    """Excited-manifold spectrum along a magnetic-field grid.

    ``energies[b, k]`` are sorted ascending. ``tracks[b, c]`` gives the sorted
    index at grid point ``b`` of the continuous curve ``c`` (curves are
    labelled by their sorted order at the first grid point), and
    ``track_overlap[b, c]`` the overlap |<ψ_prev|ψ>|² that linked it.
    """

    spec: AtomSpec
    b_grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    tracks: np.ndarray
    track_overlap: np.ndarray

    def dominant(self, b_index, k):
        """(m_J, m_I, weight) of the largest basis component of eigenvector ``k``."""
        weights = np.abs(self.vectors[b_index][:, k]) ** 2
        p = int(np.argmax(weights))
        m_j, m_i = excited_label(self.spec, p)
        return m_j, m_i, float(weights[p])

    def projections(self, k):
        """|<P, m_J, m_I|ψ_k>|² along the grid for the k-th lowest state, shape (n_B, n_excited)."""
        return np.abs(self.vectors[:, :, k]) ** 2

    def curve_energies(self):
        return np.take_along_axis(self.energies, self.tracks, axis=1)

    def rows(self):
        for b, bval in enumerate(self.b_grid):
            for k in range(self.energies.shape[1]):
                m_j, m_i, w = self.dominant(b, k)
                yield {
                    "B": float(bval),
                    "eigenvalue_index": k,
                    "energy": float(to_mhz(self.energies[b, k])),
                    "dominant_mJ": m_j,
                    "dominant_mI": float(m_i),
                    "overlap": w,
                }


def breit_rabi_scan(spec, b_grid):
    """Diagonalise the excited manifold along ``b_grid`` and follow eigenvectors by overlap."""
    b_grid = np.asarray(b_grid, dtype=float)
    if b_grid.ndim != 1 or len(b_grid) == 0:
        raise ValueError("b_grid must be a non-empty 1-D array")
    if np.any(np.diff(b_grid) <= 0):
        raise ValueError("b_grid must be strictly ascending")
    n = spec.n_excited
    energies = np.empty((len(b_grid), n))
    vectors = np.empty((len(b_grid), n, n), dtype=complex)
    tracks = np.empty((len(b_grid), n), dtype=int)
    overlap = np.ones((len(b_grid), n))
    for b, bval in enumerate(b_grid):
        energies[b], vectors[b] = excited_eigenstates(spec, bval)
        if b == 0:
            tracks[b] = np.arange(n)
            continue
        prev = vectors[b - 1][:, tracks[b - 1]]
        ov = np.abs(prev.conj().T @ vectors[b]) ** 2
        rows, cols = linear_sum_assignment(-ov)
        tracks[b, rows] = cols
        overlap[b, rows] = ov[rows, cols]
    return BreitRabiScan(spec, b_grid, energies, vectors, tracks, overlap)


def lowest_states_character(spec, b_field, count=3):
    """Dominant (m_J, m_I, weight) of the ``count`` lowest excited eigenstates."""
    scan = breit_rabi_scan(spec, [b_field])
    return [scan.dominant(0, k) for k in range(count)]


# --- nuclear quadrupole interaction ------------------------------------------------


def quadrupole_energy_correction(nuclear_spin, m_i, zeeman, q_zz):
    """First-order energy of |m_I> for -γB I_z + Σ I_μ Q_μν I_ν (``zeeman`` = γ_n B₀)."""
    if abs(m_i) > nuclear_spin + 1e-12:
        raise ValueError(f"|m_I|={abs(m_i)} exceeds I={nuclear_spin}")
    I = nuclear_spin
    return -zeeman * m_i + (1.5 * m_i**2 - 0.5 * I * (I + 1)) * q_zz


def corrected_transition_energy(delta_m, m_i, zeeman, q_zz):
    """First-order transition energy E(m_I) - E(m_I - delta_m) for delta_m in {1, 2}."""
    if delta_m == 1:
        return -zeeman + 1.5 * (2 * m_i - 1) * q_zz
    if delta_m == 2:
        return -2 * zeeman + 1.5 * (4 * m_i - 4) * q_zz
    raise ValueError("delta_m must be 1 or 2")


@dataclass(frozen=True, eq=False)
class NqiTensor:
    """Averaged nuclear-quadrupole-interaction tensor (rad/µs), real symmetric traceless."""

    q_tensor: np.ndarray = field(repr=True)

    def __post_init__(self):
        q = np.array(self.q_tensor, dtype=float)
        if q.shape != (3, 3):
            raise ValueError("NQI tensor must be 3x3")
        scale = max(np.abs(q).max(), np.finfo(float).tiny)
        if np.abs(q - q.T).max() > ALGEBRA_TOL * scale:
            raise ValueError("NQI tensor must be symmetric")
        if abs(np.trace(q)) > ALGEBRA_TOL * scale:
            raise ValueError("NQI tensor must be traceless")
        q.setflags(write=False)
        object.__setattr__(self, "q_tensor", q)

    def __getitem__(self, key):
        i, j = ("xyz".index(c) for c in key)
        return self.q_tensor[i, j]

    @property
    def is_cylindrical(self):
        q = self.q_tensor
        scale = max(np.abs(q).max(), np.finfo(float).tiny)
        off = np.abs(q - np.diag(np.diag(q))).max()
        return off <= 1e-12 * scale and abs(q[0, 0] - q[1, 1]) <= 1e-12 * scale


def nuclear_spin_hamiltonian(nuclear_spin, zeeman, nqi):
    """Spin-only Hamiltonian -γB I_z + Σ I_μ <Q>_μν I_ν, ascending m_I basis."""
    ops = angular_momentum_ops(nuclear_spin)
    comps = (ops.jx, ops.jy, ops.jz)
    q = nqi.q_tensor if isinstance(nqi, NqiTensor) else np.asarray(nqi)
    h = -zeeman * ops.jz
    for a in range(3):
        for b in range(3):
            h = h + q[a, b] * comps[a] @ comps[b]
    return h


@dataclass(frozen=True)
class TransitionAmplitudes:
    """ONER coupling amplitudes out of |m_I>; zero where the target level does not exist."""

    g_delta1: complex
    g_delta2: complex
    alpha: float
    beta: float
    delta1_allowed: bool
    delta2_allowed: bool

    def reverse(self):
        """Amplitudes of the reverse transitions (complex conjugates)."""
        return TransitionAmplitudes(
            np.conj(self.g_delta1), np.conj(self.g_delta2), self.alpha, self.beta,
            self.delta1_allowed, self.delta2_allowed,
        )


def transition_amplitudes(nuclear_spin, m_i, nqi):
    I = nuclear_spin
    if abs(m_i) > I + 1e-12:
        raise ValueError(f"|m_I|={abs(m_i)} exceeds I={I}")
    q = nqi.q_tensor if isinstance(nqi, NqiTensor) else np.asarray(nqi)
    ok1 = m_i - 1 >= -I - 1e-12
    ok2 = m_i - 2 >= -I - 1e-12
    alpha = 0.5 * abs(2 * m_i - 1) * np.sqrt(max(I * (I + 1) - m_i * (m_i - 1), 0.0)) if ok1 else 0.0
    beta = (
        0.25
        * np.sqrt(max(I * (I + 1) - (m_i - 1) * (m_i - 2), 0.0))
        * np.sqrt(max(I * (I + 1) - m_i * (m_i - 1), 0.0))
        if ok2
        else 0.0
    )
    g1 = alpha * (q[0, 2] + 1j * q[1, 2])
    g2 = beta * (q[0, 0] - q[1, 1] + 2j * q[1, 0])
    return TransitionAmplitudes(complex(g1), complex(g2), float(alpha), float(beta), bool(ok1), bool(ok2))


def nqi_operator_components(spec):
    """Electronic-space NQI operators Q̂_μν (n_e x n_e each), zero on the ground state."""
    I, J = spec.nuclear_spin, spec.excited_j
    ops = operators(spec)
    jv = ops.jvec
    j2 = J * (J + 1) * ops.excited_projector_e
    scale = spec.quadrupole_q / (2 * I * (2 * I - 1) * J * (2 * J - 1))
    out = np.empty((3, 3) + jv[0].shape, dtype=complex)
    for a in range(3):
        for b in range(3):
            sym = 1.5 * (jv[a] @ jv[b] + jv[b] @ jv[a])
            out[a, b] = scale * (sym - (j2 if a == b else 0.0))
    return out


def check_density(rho, tol=1e-8, name="density matrix"):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"{name} has non-finite entries")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError(f"{name} is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"{name} does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValueError(f"{name} is not positive semidefinite")
    return rho


def nqi_from_electronic_state(spec, rho_e):
    """Expectation value tr{ρ_E Q̂_μν} of the NQI tensor for an electronic density matrix."""
    rho_e = check_density(rho_e, name="electronic density matrix")
    if rho_e.shape[0] != spec.n_electronic:
        raise ValueError(f"electronic density must be {spec.n_electronic}x{spec.n_electronic}")
    comps = nqi_operator_components(spec)
    q = np.einsum("ij,abji->ab", rho_e, comps).real
    q = 0.5 * (q + q.T)
    q -= np.trace(q) / 3 * np.eye(3)
    return NqiTensor(q)


def electronic_reduced_state(spec, rho):
    """Partial trace over the nuclear spin of a full density matrix."""
    n_e, n_s = spec.n_electronic, spec.n_spin
    return np.einsum("aibi->ab", np.asarray(rho).reshape(n_e, n_s, n_e, n_s))


def nqi_trajectory(spec, rhos):
    """Effective NQI tensor along a trajectory of full density matrices.

    This is the reduced (product-state) picture of the coupled electronic and
    nuclear dynamics. It is a heuristic only: for the singlet/triplet system the
    product-state assumption does not hold, so no accuracy is implied.
    """
    warnings.warn("NQI trajectory from the product-state reduction is a heuristic diagnostic", stacklevel=2)
    out = []
    for rho in rhos:
        rho_e = electronic_reduced_state(spec, rho)
        rho_e = 0.5 * (rho_e + rho_e.conj().T)
        rho_e /= np.trace(rho_e).real
        out.append(nqi_from_electronic_state(spec, rho_e).q_tensor)
    return np.array(out)
