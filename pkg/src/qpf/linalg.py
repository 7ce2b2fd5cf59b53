"""Dense real-symmetric linear algebra.

Everything here works on small matrices (n <= 16 or so) and favours
determinism over speed: a cyclic Jacobi eigensolver with a fixed sign
convention, an LU solve with partial pivoting, and phase unitaries built
from the eigenbasis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, SingularMatrixError, ValidationError

JACOBI_REL_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100


def as_symmetric(m) -> np.ndarray:
    """Return ``m`` as a float64 square array, rejecting asymmetric input."""
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        i, j = np.unravel_index(np.argmax(np.abs(a - a.T)), a.shape)
        raise ValidationError(f"matrix is not symmetric: entry ({i},{j}) != ({j},{i})")
    return a


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, optionally with right-hand-side projections.

    ``eigenvectors[:, j]`` pairs with ``eigenvalues[j]``; eigenvalues ascend.
    ``projections[j]`` is the overlap of eigenvector j with the (normalized)
    right-hand side the decomposition was bound to.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    projections: np.ndarray | None = None
    sweeps: int = field(default=0, compare=False)

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def with_rhs(self, rhs) -> SpectralDecomposition:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n,):
            raise ValidationError(f"rhs has shape {rhs.shape}, expected ({self.n},)")
        return SpectralDecomposition(
            self.eigenvalues, self.eigenvectors, self.eigenvectors.T @ rhs, self.sweeps
        )

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def solve(self) -> np.ndarray:
        """Exact solution sum_j p_j u_j / lambda_j for the bound right-hand side."""
        if self.projections is None:
            raise ValidationError("decomposition has no right-hand side bound")
        return self.eigenvectors @ (self.projections / self.eigenvalues)


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def _fix_signs(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))
        if col[nz[0]] < 0:
            v[:, j] = -col
    return v


def eigh(m, *, tol: float = JACOBI_REL_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm falls to
    ``tol * ||m||_F``. Eigenvalues are returned ascending and each
    eigenvector's first nonzero component is made positive.

    Raises:
        ConvergenceError: if ``max_sweeps`` sweeps do not reach the threshold.
    """
    a = as_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(np.linalg.norm(a), np.finfo(float).tiny)
    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(sweeps, _off_norm(a))
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # stable rotation angle (Golub & Van Loan, Alg. 8.4.1)
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # tau overflows; t ~ 1 / (2 tau)
                else:
                    tau = diff / (2.0 * apq)
                    t = np.copysign(1.0, tau) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(w[order], _fix_signs(v[:, order]), None, sweeps)


def spectral_decomposition(m, rhs) -> SpectralDecomposition:
    return eigh(m).with_rhs(rhs)


def lu_solve(m, rhs) -> np.ndarray:
    """Solve ``m x = rhs`` by Doolittle LU with partial pivoting."""
    a = np.array(m, dtype=float)
    b = np.array(rhs, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n,):
        raise ValidationError(f"shape mismatch: matrix {a.shape}, rhs {b.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    perm = np.arange(n)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) <= 1e-12 * scale or scale == 0.0:
            raise SingularMatrixError(k, a[piv, k])
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
        a[k + 1 :, k] /= a[k, k]
        a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k, k + 1 :])
    y = b[perm]
    for i in range(n):
        y[i] -= a[i, :i] @ y[:i]
    x = y
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - a[i, i + 1 :] @ x[i + 1 :]) / a[i, i]
    return x


def gershgorin_bound(m) -> float:
    """Largest absolute row sum; every eigenvalue lies in [-bound, bound]."""
    a = np.asarray(m, dtype=float)
    return float(np.max(np.sum(np.abs(a), axis=1)))


def matrix_phase_unitary(sd: SpectralDecomposition, t: float) -> np.ndarray:
    """``exp(2*pi*i*t*B)`` assembled in the eigenbasis of B.

    The phase ``lambda_j * t`` is reduced mod 1 before exponentiation, so
    large power-of-two ``t`` (controlled powers in phase estimation) loses
    no precision.
    """
    phases = np.mod(sd.eigenvalues * t, 1.0)
    v = sd.eigenvectors
    return (v * np.exp(2j * np.pi * phases)) @ v.T


def pad_decomposition(sd: SpectralDecomposition, dim: int, fill: float = 0.5) -> SpectralDecomposition:
    """Embed an n-dimensional decomposition into ``dim`` >= n dimensions.

    The extra basis vectors become eigenvectors with eigenvalue ``fill`` and
    zero projection, so a register of ``log2(dim)`` qubits can host an
    n-dimensional system. Eigenvalues are no longer sorted.
    """
    n = sd.n
    if dim < n:
        raise ValidationError(f"cannot pad dimension {n} down to {dim}")
    if dim == n:
        return sd
    vecs = np.zeros((dim, dim))
    vecs[:n, :n] = sd.eigenvectors
    vecs[n:, n:] = np.eye(dim - n)
    vals = np.concatenate([sd.eigenvalues, np.full(dim - n, fill)])
    proj = None if sd.projections is None else np.concatenate([sd.projections, np.zeros(dim - n)])
    return SpectralDecomposition(vals, vecs, proj, sd.sweeps)
