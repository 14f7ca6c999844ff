"""Variance-preserving initialization of DC networks and Monte-Carlo checks of it.

Circulant coefficients are drawn from N(0, 2/n), diagonal entries uniformly
from {-1, +1} and biases from N(0, sigma_prime**2). All draws are real.

Randomness comes from Philox (a counter-based generator) with one substream
per layer, keyed by ``(seed, layer_index)``, so growing a network never
changes the draws of its existing layers.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .fft import dft, idft
from .layers import Activation, DCLayer, DCNetwork, RELU
from .linalg import CirculantMatrix, DiagonalMatrix


def layer_rng(seed: int, layer: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(stream, layer))
    return np.random.Generator(np.random.Philox(ss))


class _LayerStreams:
    """Independent generators for the circulant, diagonal and bias draws of one layer."""

    def __init__(self, seed: int, layer: int, stream: int):
        self.c, self.d, self.b = (layer_rng(seed, layer, 3 * stream + j) for j in range(3))

    def draw(self, n: int, cfg: "InitConfig", rows: Optional[int] = None):
        shape = (n,) if rows is None else (rows, n)
        c = self.c.normal(0.0, cfg.circ_std(n), size=shape)
        d = np.where(self.d.integers(0, 2, size=shape) == 1, 1.0, -1.0)
        if cfg.sigma_prime > 0:
            b = self.b.normal(0.0, cfg.sigma_prime, size=shape)
        else:
            b = np.zeros(shape)
        return c, d, b


@dataclass(frozen=True)
class InitConfig:
    seed: int = 0
    sigma_prime: float = 0.0
    sigma: Optional[float] = None  # None means sqrt(2 / n)

    def __post_init__(self):
        if not np.isfinite(self.sigma_prime) or self.sigma_prime < 0:
            raise ValueError("sigma_prime must be finite and >= 0")

    def circ_std(self, n: int) -> float:
        return float(np.sqrt(2.0 / n)) if self.sigma is None else float(self.sigma)


def init_dcnn(net: DCNetwork, cfg: InitConfig = InitConfig()) -> DCNetwork:
    """Fresh network with the same shape and activations as ``net``."""
    n = net.width
    layers = []
    for i, layer in enumerate(net.layers):
        c, d, b = _LayerStreams(cfg.seed, i, stream=0).draw(n, cfg)
        layers.append(DCLayer(DiagonalMatrix(d), CirculantMatrix(c), b.astype(complex),
                              layer.activation))
    return DCNetwork(layers)


@dataclass
class CovarianceReport:
    diag_estimates: List[float]
    max_offdiag_abs: float
    offdiag_standard_error: float
    diag_standard_errors: List[float]
    n_samples: int
    predicted_diag: float
    width: int
    depth: int

    @property
    def max_diag_rel_error(self) -> float:
        if self.predicted_diag == 0:
            return float(np.max(np.abs(self.diag_estimates)))
        return float(np.max(np.abs(np.asarray(self.diag_estimates) - self.predicted_diag))
                     / self.predicted_diag)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "depth": self.depth,
            "n_samples": self.n_samples,
            "predicted_diag": self.predicted_diag,
            "diag_estimates": list(self.diag_estimates),
            "diag_standard_errors": list(self.diag_standard_errors),
            "max_diag_rel_error": self.max_diag_rel_error,
            "max_offdiag_abs": self.max_offdiag_abs,
            "offdiag_standard_error": self.offdiag_standard_error,
        }


def sample_outputs(x, depth: int, num_samples: int, cfg: InitConfig,
                   activations: Optional[List[Activation]] = None,
                   chunk: int = 4096) -> np.ndarray:
    """Outputs ``N(x)`` of ``num_samples`` independently initialized networks.

    Default activations: ReLU on layers ``1..L-1``, identity on the last one.
    Sample ``s`` always sees the same weights whatever ``chunk`` is.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if activations is None:
        activations = [Activation.relu()] * (depth - 1) + [Activation.identity()]
    streams = [_LayerStreams(cfg.seed, i, stream=1) for i in range(depth)]
    out = np.empty((num_samples, n))
    for start in range(0, num_samples, chunk):
        m = min(chunk, num_samples - start)
        h = np.broadcast_to(x, (m, n)).astype(float)
        for i in range(depth):
            c, d, b = streams[i].draw(n, cfg, rows=m)
            y = idft(dft(c) * dft(h)).real
            y = d * y + b
            if activations[i].kind == RELU:
                y = np.maximum(y, 0.0)
            elif activations[i].kind != "identity":
                y = activations[i](y).real
            h = y
        out[start:start + m] = h
    return out


def covariance_probe(x, depth: int, num_samples: int = 20_000,
                     cfg: InitConfig = InitConfig()) -> CovarianceReport:
    """Monte-Carlo covariance of the network output over re-initializations."""
    if num_samples < 100:
        raise ValueError("covariance_probe needs at least 100 samples")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if cfg.sigma_prime != 0:
        raise ValueError("the covariance prediction assumes sigma_prime == 0")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    Y = sample_outputs(x, depth, num_samples, cfg)
    S = num_samples
    Yc = Y - Y.mean(axis=0)
    cov = Yc.T @ Yc / (S - 1)
    diag = np.diag(cov)
    sq = Yc * Yc
    diag_se = sq.std(axis=0, ddof=1) / np.sqrt(S)
    off = ~np.eye(n, dtype=bool)
    max_off = float(np.abs(cov[off]).max()) if n > 1 else 0.0
    if n > 1:
        prods = np.einsum("si,sj->ij", sq, sq) / S  # E[y_i^2 y_j^2]
        off_se = float(np.sqrt(np.max(prods[off]) / S))
    else:
        off_se = 0.0
    return CovarianceReport(
        diag_estimates=[float(v) for v in diag],
        max_offdiag_abs=max_off,
        offdiag_standard_error=off_se,
        diag_standard_errors=[float(v) for v in diag_se],
        n_samples=S,
        predicted_diag=float(2.0 / n * np.dot(x, x)),
        width=n,
        depth=depth,
    )


def variance_check_fixed_u(u, sigma: float = 1.0, num_samples: int = 50_000, seed: int = 0) -> dict:
    """Sample variance and cross-covariance of ``y = D C u`` for fixed ``u``."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    c, d, _ = _LayerStreams(seed, 0, stream=2).draw(n, InitConfig(sigma=sigma), rows=num_samples)
    y = d * idft(dft(c) * dft(u)).real
    var = y.var(axis=0, ddof=1)
    yc = y - y.mean(axis=0)
    cov = yc.T @ yc / (num_samples - 1)
    off = ~np.eye(n, dtype=bool)
    se = (yc * yc).std(axis=0, ddof=1) / np.sqrt(num_samples)
    return {
        "sample_variance": var.tolist(),
        "variance_standard_error": se.tolist(),
        "predicted_variance": float(np.sum(u * u) * sigma ** 2),
        "max_offdiag_abs": float(np.abs(cov[off]).max()) if n > 1 else 0.0,
        "num_samples": num_samples,
    }
