"""Error bounds for rank-k SVD truncation of dense ReLU networks, and their DC counterparts."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .decomposition import _next_pow2, compress_network, full_decompose
from .layers import (
    Activation,
    DenseLayer,
    DenseReluNetwork,
    dcnn_forward,
    dense_forward,
    layer_outputs,
)
from .linalg import as_complex_matrix, as_complex_vector, svd

SLACK = 1e-9


def _sigma(s: np.ndarray, j: int) -> float:
    """``j``-th singular value (1-based), zero past the end."""
    return float(s[j - 1]) if j <= s.shape[0] else 0.0


def truncate(W, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be >= 0")
    res = svd(as_complex_matrix(W))
    s = res.singular_values.copy()
    s[k:] = 0.0
    return (res.U * s) @ res.V.conj().T


def single_layer_bound(W, x, x_tilde, k: int, b=None,
                       activation: Optional[Activation] = None) -> Tuple[float, float]:
    """``(bound, actual)`` for one layer evaluated on ``x`` versus its rank-k truncation on ``x_tilde``."""
    W = as_complex_matrix(W)
    n = W.shape[0]
    if not 0 <= k < n:
        raise ValueError(f"k must satisfy 0 <= k < n, got k={k}, n={n}")
    x = as_complex_vector(x, "x")
    x_tilde = as_complex_vector(x_tilde, "x_tilde")
    b = np.zeros(n, dtype=complex) if b is None else as_complex_vector(b, "b")
    act = activation or Activation.relu()
    s = svd(W).singular_values
    bound = _sigma(s, k + 1) * np.linalg.norm(x) + _sigma(s, 1) * np.linalg.norm(x_tilde - x)
    actual = np.linalg.norm(act(W @ x + b) - act(truncate(W, k) @ x_tilde + b))
    if actual > bound + SLACK:
        raise AssertionError(f"single-layer bound violated: {actual} > {bound}")
    return float(bound), float(actual)


def truncate_network(net: DenseReluNetwork, k: int) -> DenseReluNetwork:
    return DenseReluNetwork(
        [DenseLayer(truncate(l.weight, k), l.bias.copy(), l.activation) for l in net.layers]
    )


def geometric_bound(s1: float, sigma: float, R: float, L: int) -> float:
    """``R * sigma * (1 + s1 + ... + s1**(L-1))``, evaluated stably near ``s1 = 1``."""
    if abs(s1 - 1.0) < 1e-12:
        return L * R * sigma
    return (s1 ** L - 1.0) / (s1 - 1.0) * R * sigma


@dataclass
class BoundReport:
    k: int
    L: int
    sigma_max_1: float
    sigma_max_k: float
    sigma_max_k_plus_1: float
    R_bound: float
    bound_value: float
    bound_value_sigma_k: float
    actual_max_error: float
    per_input_errors: List[float]
    extra: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        limit = self.bound_value + self.extra.get("residual_allowance", 0.0) + SLACK
        return all(e <= limit for e in self.per_input_errors)

    @property
    def status(self) -> str:
        return "OK" if self.passed else "FAILED"

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "L": self.L,
            "sigma_max_1": self.sigma_max_1,
            "sigma_max_k": self.sigma_max_k,
            "sigma_max_k_plus_1": self.sigma_max_k_plus_1,
            "R_bound": self.R_bound,
            "bound_value": self.bound_value,
            "bound_value_sigma_k": self.bound_value_sigma_k,
            "actual_max_error": self.actual_max_error,
            "per_input_errors": list(self.per_input_errors),
            "status": self.status,
        }
        d.update(self.extra)
        return d


def _as_inputs(inputs, n: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(inputs, dtype=complex))
    if X.shape[0] == 0 or X.shape[1] != n:
        raise ValueError(f"inputs must be a nonempty (m, {n}) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain NaN or Inf")
    return X


def _spectra(net: DenseReluNetwork) -> List[np.ndarray]:
    return [svd(l.weight).singular_values for l in net.layers]


def network_svd_bound(net: DenseReluNetwork, k: int, inputs) -> BoundReport:
    """Compare ``net`` with its rank-k truncation on ``inputs`` and bound the difference.

    ``R`` is the largest norm of the input or of any layer output over the
    given inputs; the input has to be included because the first layer's
    truncation error scales with ``||x||``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    X = _as_inputs(inputs, net.width)
    spectra = _spectra(net)
    s1 = max(_sigma(s, 1) for s in spectra)
    sk = max(_sigma(s, k) for s in spectra) if k >= 1 else s1
    sk1 = max(_sigma(s, k + 1) for s in spectra)
    outs = layer_outputs(net, X)
    R = float(max(np.linalg.norm(h, axis=-1).max() for h in outs[:-1]))
    L = net.depth
    errors = np.linalg.norm(dense_forward(net, X) - dense_forward(truncate_network(net, k), X), axis=-1)
    return BoundReport(
        k=k,
        L=L,
        sigma_max_1=s1,
        sigma_max_k=sk,
        sigma_max_k_plus_1=sk1,
        R_bound=R,
        bound_value=geometric_bound(s1, sk1, R, L),
        bound_value_sigma_k=geometric_bound(s1, sk, R, L),
        actual_max_error=float(errors.max()),
        per_input_errors=[float(e) for e in errors],
        extra={"R_max_over_all_outputs": float(max(np.linalg.norm(h, axis=-1).max() for h in outs))},
    )


def dc_compression_bound(net: DenseReluNetwork, k: int, inputs, eps: float = 1e-3,
                         safety: float = 1.0) -> BoundReport:
    """Bound for the DC network built from the rank-k truncation of every layer.

    The measured error is between ``net`` and the compressed DC network. On
    top of the truncation bound the report carries a residual allowance that
    propagates each layer's factorization error through the later layers.
    """
    n = net.width
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    k_eff = k if n % k == 0 else _next_pow2(k)
    X = _as_inputs(inputs, n)
    report = network_svd_bound(net, k_eff, X)
    truncated = truncate_network(net, k_eff)

    residuals = []
    for layer in truncated.layers:
        seq = full_decompose(layer.weight, k_eff, eps)
        residuals.append(seq.reconstruction_error)
    dc = compress_network(truncated, X, [k_eff] * net.depth, eps=eps, safety=safety)

    # factorization error of layer i enters as delta_i * ||W~_i|| * ||x~_{i-1}|| and is
    # then amplified by the spectral norms of the later truncated layers
    t_outs = layer_outputs(truncated, X)
    t_norms = [_sigma(s, 1) for s in _spectra(truncated)]
    allowance = 0.0
    for i, delta in enumerate(residuals):
        r_in = float(np.linalg.norm(t_outs[i], axis=-1).max())
        allowance += delta * t_norms[i] * r_in * float(np.prod(t_norms[i + 1:]))

    errors = np.linalg.norm(dense_forward(net, X) - dcnn_forward(dc, X), axis=-1)
    report.per_input_errors = [float(e) for e in errors]
    report.actual_max_error = float(errors.max())
    report.extra.update({
        "k_effective": k_eff,
        "dc_depth": dc.depth,
        "expected_dc_depth": net.depth * (4 * k_eff + 1),
        "factorization_residuals": residuals,
        "residual_allowance": allowance,
        "truncation_vs_dc_max_error": float(np.linalg.norm(
            dense_forward(truncated, X) - dcnn_forward(dc, X), axis=-1).max()),
    })
    return report
