"""Dense angular-momentum algebra and Hermitian linear-algebra helpers.

Angular-momentum matrices use the basis ordering m = -j, ..., +j
(ascending with the basis index). All index arithmetic in the atom model
relies on this ordering.
"""
from dataclasses import dataclass

import numpy as np

#: tolerance for exact algebraic identities (commutators, Casimir, hermiticity)
ALGEBRA_TOL = 1e-12
#: tolerance for eigen-decomposition residuals and orthonormality
EIGEN_TOL = 1e-10


def as_half_integer(j):
    """Return ``j`` as a float after checking that ``2j`` is a non-negative integer."""
    two_j = 2 * float(j)
    if two_j < 0 or abs(two_j - round(two_j)) > 1e-12:
        raise ValueError(f"angular momentum quantum number must be a non-negative half-integer, got {j!r}")
    return round(two_j) / 2


@dataclass(frozen=True, eq=False)
class AngularMomentumOps:
    """Spin matrices for a single angular momentum ``j``."""

    j: float
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    jplus: np.ndarray
    jminus: np.ndarray

    @property
    def dim(self):
        return self.jz.shape[0]

    @property
    def m_values(self):
        return np.arange(-self.j, self.j + 1)

    def squared(self):
        return self.jx @ self.jx + self.jy @ self.jy + self.jz @ self.jz


def angular_momentum_ops(j):
    """Build ``Jx, Jy, Jz, J+, J-`` for quantum number ``j``.

    Matrix elements follow <m+1|J+|m> = sqrt(j(j+1) - m(m+1)).

    >>> ops = angular_momentum_ops(0.5)
    >>> np.diag(ops.jz).real
    array([-0.5,  0.5])
    """
    j = as_half_integer(j)
    m = np.arange(-j, j + 1)
    dim = len(m)
    jplus = np.zeros((dim, dim), dtype=complex)
    for k in range(dim - 1):
        jplus[k + 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jminus = jplus.conj().T.copy()
    jx = 0.5 * (jplus + jminus)
    jy = -0.5j * (jplus - jminus)
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz, jplus, jminus):
        a.setflags(write=False)
    return AngularMomentumOps(j, jx, jy, jz, jplus, jminus)


def kron(a, b):
    """Kronecker product ``a ⊗ b`` (first factor is the slow index)."""
    return np.kron(np.asarray(a), np.asarray(b))


def commutator(a, b):
    return a @ b - b @ a


def hermiticity_residual(m):
    """Max-norm of ``M - M†`` relative to ``max|M|`` (0 for the zero matrix)."""
    m = np.asarray(m)
    scale = np.abs(m).max() if m.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.abs(m - m.conj().T).max() / scale)


def is_hermitian(m, tol=ALGEBRA_TOL):
    return hermiticity_residual(m) <= tol


def check_finite(m, name="matrix"):
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def hermitian_eigendecompose(m, tol=ALGEBRA_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvector columns of a Hermitian matrix.

    Raises
    ------
    ValueError
        If ``m`` is not square, not finite or not Hermitian within ``tol``.
    """
    m = check_finite(np.asarray(m, dtype=complex))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not is_hermitian(m, tol):
        raise ValueError(f"matrix is not Hermitian (residual {hermiticity_residual(m):.2e} > {tol:.0e})")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w, v


def fix_phases(vectors):
    """Rotate each column so that its largest-magnitude component is real and positive."""
    v = np.array(vectors, dtype=complex, copy=True)
    rows = np.argmax(np.abs(v), axis=0)
    lead = v[rows, np.arange(v.shape[1])]
    v /= lead / np.abs(lead)
    return v
