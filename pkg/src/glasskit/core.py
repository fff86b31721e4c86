"""Model functions, overlap matrices and small symmetric-matrix kernels.

Everything here is a pure function of its inputs. Matrices are tiny
(n <= 16 replicas), so the eigensolver is a plain cyclic Jacobi iteration
with a fixed sweep order, which makes every downstream sum reproducible
bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_SYM = 1e-12
TOL_PSD = 1e-10
TOL_RECON = 1e-10
MAX_SWEEPS = 100
MAX_REPLICAS = 16


class GlasskitError(Exception):
    """Base class for all library errors."""


class DomainError(GlasskitError, ValueError):
    """A functional was evaluated outside the domain of its logarithms/inverses."""


class NonSymmetric(GlasskitError, ValueError):
    pass


class NoConvergence(GlasskitError, RuntimeError):
    pass


class InvalidMatrix(GlasskitError, ValueError):
    """Constraint matrix violates symmetry, unit diagonal, range or PSD."""


@dataclass(frozen=True)
class ModelSpec:
    """A single spherical pure p-spin system.

    Attributes:
        p: interaction order, even and >= 2.
        beta: inverse temperature, > 0.
        h: external field.
    """

    p: int
    beta: float
    h: float = 0.0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2 or self.p % 2:
            raise ValueError(f"p must be an even integer >= 2, got {self.p}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "h", float(self.h))


def xi(model: ModelSpec, q):
    """Covariance function q^p / p of the pure model (at unit temperature)."""
    p = model.p
    return np.power(q, p) / p


def dxi(model: ModelSpec, q):
    """xi'(q) = q^(p-1)."""
    return np.power(q, model.p - 1)


def d2xi(model: ModelSpec, q):
    return (model.p - 1) * np.power(q, model.p - 2)


def theta(model: ModelSpec, q):
    """theta(q) = q xi'(q) - xi(q) = (1 - 1/p) q^p."""
    p = model.p
    return (1.0 - 1.0 / p) * np.power(q, p)


@dataclass(frozen=True)
class SymmetricEigen:
    """Spectral decomposition ``M = V diag(eigenvalues) V^T``.

    ``eigenvectors`` holds eigenvectors as columns, paired with the
    ascending ``eigenvalues``. In the row convention ``M = O^T R O`` the
    orthogonal factor is ``O = eigenvectors.T``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def O(self) -> np.ndarray:
        return self.eigenvectors.T

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _check_symmetric(M: np.ndarray, tol: float) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {M.shape}")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > tol:
        raise NonSymmetric(f"matrix asymmetry {asym:.3g} exceeds {tol:.1g}")
    return 0.5 * (M + M.T)


def sym_eigen(M, tol_sym: float = TOL_SYM, max_sweeps: int = MAX_SWEEPS) -> SymmetricEigen:
    """Eigen-decompose a small real symmetric matrix by cyclic Jacobi rotations.

    Pairs (i, j), i < j, are visited in row-major order every sweep. The
    iteration stops once the off-diagonal Frobenius norm falls below
    machine precision relative to the full norm.

    Raises:
        NonSymmetric: if ``max|M - M^T| > tol_sym``.
        NoConvergence: if ``max_sweeps`` sweeps do not suffice.
    """
    a = _check_symmetric(M, tol_sym).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a))
    if n <= 1 or scale == 0.0:
        return SymmetricEigen(np.diag(a).copy(), v, 0)
    eps = np.finfo(float).eps

    sweep = 0
    while True:
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= eps * scale:
            break
        if sweep >= max_sweeps:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3g})")
        sweep += 1
        for i in range(n - 1):
            for j in range(i + 1, n):
                apq = a[i, j]
                if abs(apq) <= eps * eps * scale:
                    a[i, j] = a[j, i] = 0.0
                    continue
                tau = (a[j, j] - a[i, i]) / (2.0 * apq)
                t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (i, j) Givens rotation
                ai = a[:, i].copy()
                aj = a[:, j].copy()
                a[:, i] = c * ai - s * aj
                a[:, j] = s * ai + c * aj
                ai = a[i, :].copy()
                aj = a[j, :].copy()
                a[i, :] = c * ai - s * aj
                a[j, :] = s * ai + c * aj
                a[i, j] = a[j, i] = 0.0
                vi = v[:, i].copy()
                vj = v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymmetricEigen(w[order], v[:, order], sweep)


def min_eigenvalue(M) -> float:
    return float(sym_eigen(M).eigenvalues[0])


def psd_check(M, tol: float = TOL_PSD) -> bool:
    """True iff the smallest eigenvalue of symmetric ``M`` is >= -tol."""
    return min_eigenvalue(M) >= -tol


def pd_check(M, tol: float = 0.0) -> bool:
    return min_eigenvalue(M) > tol


def sym_inv(M) -> np.ndarray:
    e = sym_eigen(M)
    v = e.eigenvectors
    return (v / e.eigenvalues) @ v.T


def sym_logdet(M) -> float:
    """log det of a positive definite matrix; DomainError otherwise."""
    w = sym_eigen(M).eigenvalues
    if w[0] <= 0.0:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    return float(np.sum(np.log(w)))


@dataclass(frozen=True)
class OverlapMatrix:
    """Symmetric n x n overlap constraint with unit diagonal.

    The stored ``entries`` array is a read-only copy.
    """

    entries: np.ndarray

    def __post_init__(self):
        Q = np.array(self.entries, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
            raise InvalidMatrix(f"overlap matrix must be square, got shape {Q.shape}")
        if Q.shape[0] > MAX_REPLICAS:
            raise InvalidMatrix(f"at most {MAX_REPLICAS} replicas supported")
        if np.max(np.abs(Q - Q.T)) > TOL_SYM:
            raise InvalidMatrix("overlap matrix is not symmetric")
        if np.max(np.abs(np.diag(Q) - 1.0)) > TOL_SYM:
            raise InvalidMatrix("overlap matrix must have unit diagonal")
        if np.max(np.abs(Q)) > 1.0 + TOL_SYM:
            raise InvalidMatrix("overlap entries must lie in [-1, 1]")
        Q = 0.5 * (Q + Q.T)
        if not psd_check(Q, TOL_PSD):
            raise InvalidMatrix("overlap matrix is not nonnegative definite")
        Q.setflags(write=False)
        object.__setattr__(self, "entries", Q)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_flat(cls, values) -> "OverlapMatrix":
        """Build from a row-major sequence whose length is a perfect square."""
        values = np.asarray(values, dtype=float).ravel()
        n = int(round(np.sqrt(values.size)))
        if n * n != values.size:
            raise InvalidMatrix(f"{values.size} entries do not form a square matrix")
        return cls(values.reshape(n, n))

    @classmethod
    def two_replica(cls, u: float) -> "OverlapMatrix":
        return cls(np.array([[1.0, u], [u, 1.0]]))


def ultrametric_test_matrix(q: float) -> np.ndarray:
    """The non-ultrametric three-replica configuration with overlaps (q, q, -q)."""
    return np.array([[1.0, q, q], [q, 1.0, -q], [q, -q, 1.0]])
