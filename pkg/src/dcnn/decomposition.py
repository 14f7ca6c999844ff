"""Diagonal-circulant factorizations of dense matrices and networks.

The pipeline for a rank-``k`` matrix ``A`` (``k`` dividing ``n``):

1. ``A = U S V^H`` with the trailing ``n - k`` columns of ``U`` and ``V`` zeroed.
2. ``U = W R O`` where ``R`` is the 0/1 circulant from :func:`choose_r`, ``O``
   keeps the first ``k`` coordinates, and ``W = sum_i D_i S^i`` is a
   ``k``-term shifted-diagonal sum (same for ``V = W' R O``).
3. Each shifted-diagonal sum is turned into an alternating product
   ``D C D ... C D`` of ``2k - 1`` factors by :func:`sum_to_product`.

The assembled product ``W R (O S O) R^H W'^H`` has ``4k + 1`` factors.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .layers import Activation, DCLayer, DCNetwork, DenseReluNetwork, IDENTITY, RELU
from .linalg import (
    CirculantMatrix,
    DiagonalMatrix,
    NumericalError,
    Operator,
    as_complex_matrix,
    materialize,
    numeric_rank,
    svd,
)


def relative_error(approx: np.ndarray, target: np.ndarray) -> float:
    """``||approx - target||_2 / ||target||_2`` in operator norm (absolute if target is 0)."""
    err = np.linalg.norm(approx - target, 2)
    scale = np.linalg.norm(target, 2)
    return float(err / scale) if scale > 0 else float(err)


@dataclass(eq=False)
class ShiftedDiagSum:
    """``sum_j diag(diags[j]) @ S**shifts[j]``."""

    diags: np.ndarray
    shifts: Tuple[int, ...]

    def __post_init__(self):
        self.diags = np.atleast_2d(np.asarray(self.diags, dtype=complex))
        self.shifts = tuple(int(s) for s in self.shifts)
        if self.diags.shape[0] != len(self.shifts):
            raise ValueError("one shift per diagonal is required")

    @property
    def n(self) -> int:
        return self.diags.shape[1]

    @property
    def k(self) -> int:
        """Number of terms in the dense (zero-padded) expansion."""
        return max(self.shifts) + 1 if self.shifts else 0

    def coefficients(self, k: Optional[int] = None) -> np.ndarray:
        k = self.k if k is None else k
        E = np.zeros((k, self.n), dtype=complex)
        for d, s in zip(self.diags, self.shifts):
            E[s] += d
        return E

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        out = np.zeros(np.broadcast_shapes(x.shape, (self.n,)), dtype=complex)
        for d, s in zip(self.diags, self.shifts):
            out += d * np.roll(x, s, axis=-1)
        return out

    def to_dense(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n), dtype=complex)
        rows = np.arange(n)
        for d, s in zip(self.diags, self.shifts):
            A[rows, (rows - s) % n] += d
        return A


@dataclass(eq=False)
class FactorSequence:
    """Alternating circulant/diagonal product ``factors[0] @ factors[1] @ ...``."""

    factors: List[Operator]
    reconstruction_error: float = float("nan")

    def __post_init__(self):
        if not self.factors:
            raise ValueError("empty factor sequence")
        n = self.factors[0].n
        for a, b in zip(self.factors, self.factors[1:]):
            if type(a) is type(b):
                raise ValueError("factors must alternate between circulant and diagonal")
        if any(f.n != n for f in self.factors):
            raise ValueError("factors must share one width")

    @property
    def width(self) -> int:
        return self.factors[0].n

    def __len__(self) -> int:
        return len(self.factors)

    def kinds(self) -> List[str]:
        return ["circulant" if isinstance(f, CirculantMatrix) else "diagonal" for f in self.factors]

    def matvec(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=complex)
        for f in reversed(self.factors):
            h = f @ h
        return h

    def to_dense(self) -> np.ndarray:
        M = np.eye(self.width, dtype=complex)
        for f in self.factors:
            if isinstance(f, DiagonalMatrix):
                M = M * f.entries[None, :]
            else:
                M = M @ materialize(f)
        return M

    def conj_transpose(self) -> "FactorSequence":
        return FactorSequence([f.conj_transpose() for f in reversed(self.factors)],
                              self.reconstruction_error)

    def transpose(self) -> "FactorSequence":
        return FactorSequence([f.transpose() for f in reversed(self.factors)],
                              self.reconstruction_error)


def merge_adjacent(factors: Sequence[Operator]) -> List[Operator]:
    """Multiply out neighbouring factors of the same kind."""
    out: List[Operator] = []
    for f in factors:
        if out and type(out[-1]) is type(f):
            out[-1] = out[-1] @ f
        else:
            out.append(f)
    return out


def shifted_diag_decompose(A) -> ShiftedDiagSum:
    """Exact expansion ``A = sum_i D_i S^i`` with ``D_i[t] = A[t, (t - i) % n]``.

    Shifts whose diagonal is identically zero are dropped.
    """
    A = as_complex_matrix(A)
    n = A.shape[0]
    rows = np.arange(n)
    diags, shifts = [], []
    for s in range(n):
        d = A[rows, (rows - s) % n]
        if np.any(d != 0):
            diags.append(d)
            shifts.append(s)
    if not diags:
        return ShiftedDiagSum(np.zeros((1, n), dtype=complex), (0,))
    return ShiftedDiagSum(np.array(diags), tuple(shifts))


def choose_r(n: int, k: int) -> CirculantMatrix:
    """0/1 circulant with ones at the (1-based) positions ``k, 2k, ..., n``."""
    if k < 1 or n % k:
        raise ValueError(f"k={k} must divide n={n}")
    c = np.zeros(n, dtype=complex)
    c[k - 1::k] = 1.0
    return CirculantMatrix(c)


def projection_O(n: int, k: int) -> DiagonalMatrix:
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    d = np.zeros(n, dtype=complex)
    d[:k] = 1.0
    return DiagonalMatrix(d)


def solve_w(U, R: CirculantMatrix, O: DiagonalMatrix, k: int, tol: float = 1e-10) -> ShiftedDiagSum:
    """Find ``W = sum_{i<k} D_i S^i`` with ``W R O = U``.

    Row ``t`` of ``W R O`` only involves the ``k`` unknowns ``D_0[t]..D_{k-1}[t]``,
    so the system splits into ``n`` independent ``k x k`` blocks. With ``R``
    from :func:`choose_r` every block is a permutation matrix.
    """
    U = as_complex_matrix(U, "U")
    n = U.shape[0]
    if k < 1 or n % k:
        raise ValueError(f"k={k} must divide n={n}")
    if R.n != n or O.n != n:
        raise ValueError("dimension mismatch")
    if np.count_nonzero(O.entries[k:]) or not np.allclose(O.entries[:k], 1.0):
        raise ValueError("O must be the projection onto the first k coordinates")
    scale = np.abs(U).max()
    if np.abs(U[:, k:]).max(initial=0.0) > tol * max(scale, 1.0):
        raise ValueError("trailing n-k columns of U must be zero")

    t = np.arange(n)[:, None, None]
    c = np.arange(k)[None, :, None]
    i = np.arange(k)[None, None, :]
    blocks = R.coeffs[(t - i - c) % n]  # blocks[t, c, i]
    rhs = U[:, :k]

    is_perm = (
        np.all((blocks == 0) | (blocks == 1))
        and np.all(blocks.real.sum(axis=1) == 1)
        and np.all(blocks.real.sum(axis=2) == 1)
    )
    if is_perm:
        D = np.einsum("tci,tc->ti", blocks.real, rhs)
    else:
        try:
            D = np.linalg.solve(blocks, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular block in the W system") from exc
    return ShiftedDiagSum(D.T.copy(), tuple(range(k)))


@dataclass(eq=False)
class RankReduction:
    W: ShiftedDiagSum
    R: CirculantMatrix
    O: DiagonalMatrix
    Sigma: DiagonalMatrix
    Wp: ShiftedDiagSum
    k: int

    def factors(self) -> Tuple[np.ndarray, ...]:
        R = materialize(self.R)
        O = np.diag(self.O.entries)
        return (self.W.to_dense(), R, O, np.diag(self.Sigma.entries), O.T, R.conj().T,
                self.Wp.to_dense().conj().T)

    def reconstruct(self) -> np.ndarray:
        W, R, O, S, Ot, Rh, Wph = self.factors()
        return W @ R @ O @ S @ Ot @ Rh @ Wph


def rank_reduce(A, k: int, rank_tol: float = 1e-10) -> RankReduction:
    """Write a rank-``<= k`` matrix as ``W R O Sigma O^T R^H W'^H``."""
    A = as_complex_matrix(A)
    n = A.shape[0]
    if k < 1 or n % k:
        raise ValueError(f"k={k} must divide n={n}")
    rank = numeric_rank(A, rank_tol) if np.any(A) else 0
    if rank > k:
        raise ValueError(f"matrix has numeric rank {rank} > k={k}")
    res = svd(A)
    U = res.U.copy()
    V = res.V.copy()
    U[:, k:] = 0.0
    V[:, k:] = 0.0
    sigma = np.zeros(n, dtype=complex)
    sigma[:k] = res.singular_values[:k]
    R = choose_r(n, k)
    O = projection_O(n, k)
    return RankReduction(solve_w(U, R, O, k), R, O, DiagonalMatrix(sigma), solve_w(V, R, O, k), k)


def _companion_eig(E: np.ndarray):
    """Eigenpairs of ``P(mu) = sum_j mu**(p-j) E_j S^j`` (``p = k - 1``) via a companion pencil."""
    k, n = E.shape
    p = k - 1
    N = n * p
    rows = np.arange(n)

    def coeff(m):  # coefficient matrix of mu**m
        j = p - m
        M = np.zeros((n, n), dtype=complex)
        M[rows, (rows - j) % n] = E[j]
        return M

    A = np.zeros((N, N), dtype=complex)
    for b in range(p - 1):
        A[b * n:(b + 1) * n, (b + 1) * n:(b + 2) * n] = np.eye(n)
    for m in range(p):
        A[(p - 1) * n:, m * n:(m + 1) * n] = -coeff(m)
    lead = E[0]
    if np.all(np.abs(lead) > 1e-300):
        A[(p - 1) * n:, :] /= lead[:, None]
        mu, Z = np.linalg.eig(A)
    else:
        B = np.eye(N, dtype=complex)
        B[(p - 1) * n:, (p - 1) * n:] = np.diag(lead)
        mu, Z = scipy.linalg.eig(A, B)
    finite = np.isfinite(mu)
    return mu[finite], Z[:n, finite]


def _peel(E: np.ndarray, choice: int = 0):
    """Split ``W = sum_j E_j S^j`` as ``W~ (I + beta S) D`` with ``W~`` one term shorter.

    Substituting ``g = 1/d`` turns the matching conditions into
    ``P(-beta) g = 0``; among the eigenpairs we take the one whose ``g`` has the
    most even magnitudes (``choice`` picks a lower-ranked candidate).
    """
    k, n = E.shape
    mu, G = _companion_eig(E)
    mags = np.abs(G)
    top = mags.max(axis=0)
    ok = top > 0
    score = np.where(ok, mags.min(axis=0) / np.where(ok, top, 1.0), 0.0)
    order = np.argsort(-score, kind="stable")
    if not order.size or score[order[min(choice, order.size - 1)]] <= 1e-12:
        raise NumericalError("no eigenvector with non-vanishing entries")
    j = order[min(choice, order.size - 1)]
    g = G[:, j]
    g = g / np.exp(np.mean(np.log(np.abs(g))))
    beta = -mu[j]
    F = np.zeros((k - 1, n), dtype=complex)
    prev = np.zeros(n, dtype=complex)
    for m in range(k - 1):
        F[m] = E[m] * np.roll(g, m) - beta * prev
        prev = F[m]
    return F, beta, 1.0 / g


def _factor_coefficients(E: np.ndarray, choice: int) -> List[Operator]:
    k, n = E.shape
    if k == 1:
        return [DiagonalMatrix(E[0])]
    if not np.any(E[-1]):
        # trailing term vanishes: factor the shorter sum, pad with identities
        return _factor_coefficients(E[:-1], choice) + [CirculantMatrix.identity(n),
                                                       DiagonalMatrix.identity(n)]
    if not np.any(E[0]):
        # W = (sum_j E_{j+1} S^j) S
        shift = np.zeros(n, dtype=complex)
        shift[1] = 1.0
        return _factor_coefficients(E[1:], choice) + [CirculantMatrix(shift),
                                                      DiagonalMatrix.identity(n)]
    F, beta, d = _peel(E, choice)
    c = np.zeros(n, dtype=complex)
    c[0] = 1.0
    c[1 % n] += beta
    return _factor_coefficients(F, 0) + [CirculantMatrix(c), DiagonalMatrix(d)]


def sum_to_product(W: ShiftedDiagSum, eps: float = 1e-3, max_restarts: int = 4,
                   certify_max_width: int = 256) -> FactorSequence:
    """Alternating product ``D_1 C_1 D_2 ... C_{k-1} D_k`` equal to ``W``.

    Every circulant factor has the form ``I + beta S``. The result is certified
    against the dense ``W`` (operator norm) when ``n <= certify_max_width``;
    :class:`NumericalError` is raised if no restart gets below ``eps``.
    """
    k = W.k
    if k < 1:
        raise ValueError("need at least one term")
    E = W.coefficients()
    n = W.n
    if n == 1:
        return FactorSequence([DiagonalMatrix(E.sum(axis=0))], 0.0)
    target = W.to_dense() if n <= certify_max_width else None
    best_err, best = np.inf, None
    for choice in range(max_restarts):
        try:
            factors = _factor_coefficients(E, choice)
        except NumericalError:
            continue
        seq = FactorSequence(factors)
        if target is None:
            seq.reconstruction_error = float("nan")
            return seq
        err = relative_error(seq.to_dense(), target)
        if err < best_err:
            best_err, best = err, seq
            best.reconstruction_error = err
        if err <= eps:
            break
    if best is None or best_err > eps:
        raise NumericalError(f"sum-to-product error {best_err:.3g} exceeds eps={eps:g}",
                             best_error=best_err)
    assert len(best) == 2 * k - 1
    return best


def full_decompose(A, k: int, eps: float = 1e-3, rank_tol: float = 1e-10,
                   certify_max_width: int = 256) -> FactorSequence:
    """``4k + 1`` alternating factors approximating a rank-``<= k`` matrix."""
    A = as_complex_matrix(A)
    red = rank_reduce(A, k, rank_tol)
    left = sum_to_product(red.W, eps, certify_max_width=certify_max_width)
    right = sum_to_product(red.Wp, eps, certify_max_width=certify_max_width).conj_transpose()
    middle = [red.R, DiagonalMatrix(red.O.entries * red.Sigma.entries * red.O.entries),
              red.R.conj_transpose()]
    seq = FactorSequence(merge_adjacent(left.factors + middle + right.factors))
    if A.shape[0] <= certify_max_width:
        seq.reconstruction_error = relative_error(seq.to_dense(), A)
    return seq


def huhtanen_decompose(A, eps: float = 1e-3, certify_max_width: int = 256) -> FactorSequence:
    """``2n - 1`` alternating factors for an arbitrary square matrix."""
    A = as_complex_matrix(A)
    n = A.shape[0]
    sds = shifted_diag_decompose(A)
    full = ShiftedDiagSum(sds.coefficients(n), tuple(range(n)))
    seq = sum_to_product(full, eps, certify_max_width=certify_max_width)
    if n <= certify_max_width:
        seq.reconstruction_error = relative_error(seq.to_dense(), A)
    return seq


def _apply(op, X: np.ndarray) -> np.ndarray:
    if isinstance(op, (CirculantMatrix, DiagonalMatrix)):
        return op @ X
    return X @ np.asarray(op, dtype=complex).T


def linearizing_biases(W_seq: Sequence, b, samples, safety: float = 1.0) -> List[np.ndarray]:
    """Biases that keep every intermediate ReLU in its linear regime on ``samples``.

    ``W_seq`` lists the matrices in application order (``W_seq[0]`` acts first).
    With these biases ``ReLU(W_L ... ReLU(W_1 x + b_1) ... + b_L)`` equals
    ``ReLU(W_L ... W_1 x + b)`` for every sample: each partial product is lifted
    by a constant ``omega`` whose real and imaginary parts dominate every
    coordinate seen on the samples, and the lift is removed at the last step.
    """
    L = len(W_seq)
    if L == 0:
        raise ValueError("need at least one matrix")
    b = np.asarray(b, dtype=complex)
    if L == 1:
        return [b.copy()]
    X = np.atleast_2d(np.asarray(samples, dtype=complex))
    if X.shape[0] == 0:
        raise ValueError("need at least one calibration sample")
    n = X.shape[1]
    re_max, im_max = 0.0, 0.0
    H = X
    for op in W_seq:
        H = _apply(op, H)
        re_max = max(re_max, float(np.abs(H.real).max()))
        im_max = max(im_max, float(np.abs(H.imag).max()))
    omega = safety * (re_max + 1j * im_max)
    lift = np.full(n, omega, dtype=complex)
    betas = [lift.copy()]
    for op in W_seq[1:-1]:
        betas.append(lift - _apply(op, lift))
    betas.append(b - _apply(W_seq[-1], lift))
    return betas


def _next_pow2(k: int) -> int:
    return 1 << max(k - 1, 0).bit_length()


def compress_network(net: DenseReluNetwork, samples, per_layer_ranks: Optional[Sequence[int]] = None,
                     eps: float = 1e-3, mode: str = "rank_based", intermediate: str = RELU,
                     rank_tol: float = 1e-10, safety: float = 1.0) -> DCNetwork:
    """Replace every dense layer by a chain of DC layers, one layer per factor.

    ``rank_based`` factors ``W_i`` into ``4k_i' + 1`` factors where ``k_i'`` is
    the layer rank, rounded up to a power of two unless it already divides the
    width. ``full_huhtanen`` uses ``2n - 1`` factors per layer regardless of rank.
    Intermediate layers get ReLU activations whose biases come from
    :func:`linearizing_biases` on ``samples`` (or identity activations and zero
    biases with ``intermediate="identity"``); the last layer of each chain keeps
    the original activation and reproduces the original bias.
    """
    if mode not in ("rank_based", "full_huhtanen"):
        raise ValueError(f"unknown mode {mode!r}")
    if intermediate not in (RELU, IDENTITY):
        raise ValueError("intermediate must be 'relu' or 'identity'")
    n = net.width
    if mode == "rank_based" and n & (n - 1):
        raise ValueError("rank-based compression needs a power-of-two width")
    X = np.atleast_2d(np.asarray(samples, dtype=complex))

    layers: List[DCLayer] = []
    for i, dense in enumerate(net.layers):
        W = dense.weight
        if mode == "full_huhtanen":
            seq = huhtanen_decompose(W, eps)
        else:
            if per_layer_ranks is not None:
                k = int(per_layer_ranks[i])
            else:
                k = numeric_rank(W, rank_tol) if np.any(W) else 0
            if k == 0:
                seq = FactorSequence([DiagonalMatrix(np.zeros(n, dtype=complex))], 0.0)
            else:
                if n % k:
                    k = _next_pow2(k)
                seq = full_decompose(W, k, eps, rank_tol)
        chain = list(reversed(seq.factors))
        if intermediate == RELU:
            biases = linearizing_biases(chain, dense.bias, X, safety)
            inner_act = Activation.relu()
        else:
            biases = [np.zeros(n, dtype=complex)] * (len(chain) - 1) + [dense.bias]
            inner_act = Activation.identity()
        block = []
        for j, (f, beta) in enumerate(zip(chain, biases)):
            act = dense.activation if j == len(chain) - 1 else inner_act
            if isinstance(f, CirculantMatrix):
                block.append(DCLayer(DiagonalMatrix.identity(n), f, beta, act))
            else:
                block.append(DCLayer(f, CirculantMatrix.identity(n), beta, act))
        layers.extend(block)
        for layer in block:
            X = layer.activation(layer.pre_activation(X))
    return DCNetwork(layers)
