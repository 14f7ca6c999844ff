"""Dense and structured complex linear algebra.

Vectors and matrices are plain ``complex128`` numpy arrays. Circulant and
diagonal operators are thin wrappers over their defining coefficient vector.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .fft import dft, idft


class NumericalError(RuntimeError):
    """An iterative method failed to reach its tolerance."""

    def __init__(self, message: str, best_error: Optional[float] = None):
        super().__init__(message)
        self.best_error = best_error


def as_complex_vector(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf")
    return x


def as_complex_matrix(A, name: str = "A", square: bool = True) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


@dataclass(eq=False)
class CirculantMatrix:
    """Circulant matrix given by its first column ``coeffs``.

    Entry ``(i, j)`` of the full matrix is ``coeffs[(i - j) % n]``.
    """

    coeffs: np.ndarray
    _spectrum: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.coeffs = as_complex_vector(self.coeffs, "coeffs")

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = dft(self.coeffs)
        return self._spectrum

    @classmethod
    def identity(cls, n: int) -> "CirculantMatrix":
        c = np.zeros(n, dtype=complex)
        c[0] = 1.0
        return cls(c)

    @classmethod
    def from_spectrum(cls, spectrum) -> "CirculantMatrix":
        spectrum = np.asarray(spectrum, dtype=complex)
        return cls(idft(spectrum), spectrum.copy())

    def transpose(self) -> "CirculantMatrix":
        return CirculantMatrix(np.roll(self.coeffs[::-1], 1))

    def conj_transpose(self) -> "CirculantMatrix":
        return CirculantMatrix(np.roll(self.coeffs[::-1], 1).conj())

    def __matmul__(self, other):
        if isinstance(other, CirculantMatrix):
            if other.n != self.n:
                raise ValueError("dimension mismatch")
            return CirculantMatrix.from_spectrum(self.spectrum * other.spectrum)
        return circ_matvec(self, other)


@dataclass(eq=False)
class DiagonalMatrix:
    entries: np.ndarray

    def __post_init__(self):
        self.entries = as_complex_vector(self.entries, "entries")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n: int) -> "DiagonalMatrix":
        return cls(np.ones(n, dtype=complex))

    def transpose(self) -> "DiagonalMatrix":
        return DiagonalMatrix(self.entries.copy())

    def conj_transpose(self) -> "DiagonalMatrix":
        return DiagonalMatrix(self.entries.conj())

    def __matmul__(self, other):
        if isinstance(other, DiagonalMatrix):
            if other.n != self.n:
                raise ValueError("dimension mismatch")
            return DiagonalMatrix(self.entries * other.entries)
        return diag_matvec(self, other)


Operator = Union[CirculantMatrix, DiagonalMatrix]


def _check_last_dim(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[-1] != n:
        raise ValueError(f"dimension mismatch: operator is {n}x{n}, vector has shape {x.shape}")
    return x


def circ_matvec(C: CirculantMatrix, x) -> np.ndarray:
    """``C @ x`` through the convolution theorem; ``x`` may carry leading batch axes."""
    x = _check_last_dim(x, C.n)
    return idft(C.spectrum * dft(x))


def diag_matvec(D: DiagonalMatrix, x) -> np.ndarray:
    x = _check_last_dim(x, D.n)
    return D.entries * x


def shift_apply(x, p: int = 1) -> np.ndarray:
    """Apply the cyclic shift ``S**p``: ``result[t] = x[(t - p) % n]``."""
    x = np.asarray(x, dtype=complex)
    return np.roll(x, int(p), axis=-1)


def shift_matrix(n: int, p: int = 1) -> np.ndarray:
    return np.roll(np.eye(n, dtype=complex), int(p), axis=0)


def materialize(op: Operator) -> np.ndarray:
    if isinstance(op, CirculantMatrix):
        n = op.n
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return op.coeffs[idx]
    if isinstance(op, DiagonalMatrix):
        return np.diag(op.entries)
    raise TypeError(f"cannot materialize {type(op).__name__}")


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.conj().T


def _round_robin(n: int):
    """Pairings for one Jacobi sweep: ``n - 1`` rounds of ``n // 2`` disjoint pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_unitary(Q: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns outside ``keep`` with an orthonormal complement."""
    n = Q.shape[0]
    r = int(keep.sum())
    if r == n:
        return Q
    basis = Q[:, keep]
    if r:
        proj = np.eye(n) - basis @ basis.conj().T
    else:
        proj = np.eye(n, dtype=complex)
    comp, _, _ = np.linalg.svd(proj)
    out = Q.copy()
    out[:, ~keep] = comp[:, : n - r]
    return out


def svd(A, max_sweeps: int = 100, tol: float = 1e-15) -> SvdResult:
    """SVD of a square complex matrix by one-sided (Hestenes) Jacobi rotations.

    Each sweep visits every column pair once in round-robin order, rotating
    ``n // 2`` disjoint pairs at a time. Singular values come back sorted in
    descending order; ``A = U @ diag(s) @ V^H``.
    """
    A = as_complex_matrix(A)
    n = A.shape[0]
    if n > 1024:
        raise ValueError("svd is limited to n <= 1024")
    G = A.copy()
    V = np.eye(n, dtype=complex)
    rounds = _round_robin(n)
    converged = n == 1
    for _ in range(max_sweeps):
        if converged:
            break
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            gp, gq = G[:, p], G[:, q]
            alpha = np.einsum("ij,ij->j", gp.conj(), gp).real
            beta = np.einsum("ij,ij->j", gq.conj(), gq).real
            gamma = np.einsum("ij,ij->j", gp.conj(), gq)
            mag = np.abs(gamma)
            active = mag > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            gp, gq = gp[:, active], gq[:, active]
            alpha, beta, gamma, mag = alpha[active], beta[active], gamma[active], mag[active]
            phase = gamma / mag
            zeta = (beta - alpha) / (2.0 * mag)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            gq = gq * phase.conj()
            G[:, p] = c * gp - s * gq
            G[:, q] = s * gp + c * gq
            vp, vq = V[:, p], V[:, q] * phase.conj()
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq
        if not rotated:
            converged = True
    if not converged:
        raise NumericalError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    sigma = np.linalg.norm(G, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    G = G[:, order]
    V = V[:, order]
    keep = (sigma > 0) & (sigma > sigma[0] * 1e-13)
    U = np.zeros_like(G)
    U[:, keep] = G[:, keep] / sigma[keep]
    U = _complete_unitary(U, keep)
    sigma[~keep] = 0.0
    return SvdResult(U, sigma, V)


def operator_norm(A, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``A^H A``."""
    A = as_complex_matrix(A, square=False)
    if not np.any(A):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=A.shape[1]) + 1j * rng.normal(size=A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A.conj().T @ (A @ v)
        new_lam = np.linalg.norm(w)
        if new_lam == 0.0:
            return 0.0
        v = w / new_lam
        if abs(new_lam - lam) <= tol * new_lam:
            lam = new_lam
            break
        lam = new_lam
    # Rayleigh quotient is quadratically more accurate than the iterate norm
    return float(np.linalg.norm(A @ v))


def numeric_rank(A, tol: float = 1e-10) -> int:
    """Number of singular values above ``tol * sigma_1``."""
    s = svd(A).singular_values
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
