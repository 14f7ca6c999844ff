"""Diagonal-circulant layers, dense ReLU networks and their forward passes."""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .linalg import (
    CirculantMatrix,
    DiagonalMatrix,
    as_complex_matrix,
    as_complex_vector,
    circ_matvec,
    materialize,
    numeric_rank,
)

RELU = "relu"
LEAKY_RELU = "leaky_relu"
IDENTITY = "identity"


def complex_relu(z):
    """ReLU applied separately to the real and imaginary parts."""
    z = np.asarray(z, dtype=complex)
    return np.maximum(z.real, 0.0) + 1j * np.maximum(z.imag, 0.0)


def leaky_complex_relu(z, slope: float):
    z = np.asarray(z, dtype=complex)
    re, im = z.real, z.imag
    return np.where(re > 0, re, slope * re) + 1j * np.where(im > 0, im, slope * im)


@dataclass(frozen=True)
class Activation:
    kind: str = IDENTITY
    slope: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (RELU, LEAKY_RELU, IDENTITY):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == LEAKY_RELU:
            if self.slope is None or not (0.0 < self.slope <= 1.0):
                raise ValueError("leaky activation needs a slope in (0, 1]")
        elif self.slope is not None:
            raise ValueError(f"{self.kind} activation takes no slope")

    @classmethod
    def relu(cls) -> "Activation":
        return cls(RELU)

    @classmethod
    def leaky(cls, slope: float) -> "Activation":
        return cls(LEAKY_RELU, float(slope))

    @classmethod
    def identity(cls) -> "Activation":
        return cls(IDENTITY)

    @property
    def negative_slope(self) -> float:
        """Derivative on the negative half-line (1 for identity)."""
        if self.kind == RELU:
            return 0.0
        if self.kind == LEAKY_RELU:
            return self.slope
        return 1.0

    def __call__(self, z):
        if self.kind == RELU:
            return complex_relu(z)
        if self.kind == LEAKY_RELU:
            return leaky_complex_relu(z, self.slope)
        return np.asarray(z, dtype=complex)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.slope is not None:
            d["slope"] = self.slope
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Activation":
        return cls(d["kind"], d.get("slope"))


@dataclass(eq=False)
class DCLayer:
    """``x -> activation(diag * (circ @ x) + bias)``."""

    diag: DiagonalMatrix
    circ: CirculantMatrix
    bias: np.ndarray
    activation: Activation = field(default_factory=Activation.identity)

    def __post_init__(self):
        self.bias = as_complex_vector(self.bias, "bias")
        if not (self.diag.n == self.circ.n == self.bias.shape[0]):
            raise ValueError("diag, circ and bias must share the same width")

    @property
    def width(self) -> int:
        return self.bias.shape[0]

    @classmethod
    def identity(cls, n: int, activation: Optional[Activation] = None) -> "DCLayer":
        return cls(
            DiagonalMatrix.identity(n),
            CirculantMatrix.identity(n),
            np.zeros(n, dtype=complex),
            activation or Activation.identity(),
        )

    def pre_activation(self, x) -> np.ndarray:
        return self.diag.entries * circ_matvec(self.circ, x) + self.bias

    def weight_matrix(self) -> np.ndarray:
        return self.diag.entries[:, None] * materialize(self.circ)


def dc_layer_forward(layer: DCLayer, x) -> np.ndarray:
    return layer.activation(layer.pre_activation(x))


@dataclass(eq=False)
class DCNetwork:
    layers: List[DCLayer]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a DC network needs at least one layer")
        widths = {layer.width for layer in self.layers}
        if len(widths) != 1:
            raise ValueError(f"all layers must share one width, got {sorted(widths)}")

    @property
    def width(self) -> int:
        return self.layers[0].width

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_dense(self) -> "DenseReluNetwork":
        return DenseReluNetwork(
            [DenseLayer(l.weight_matrix(), l.bias.copy(), l.activation) for l in self.layers]
        )


def dcnn_forward(net: DCNetwork, x) -> np.ndarray:
    h = np.asarray(x, dtype=complex)
    for layer in net.layers:
        h = dc_layer_forward(layer, h)
    return h


@dataclass(eq=False)
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = field(default_factory=Activation.relu)

    def __post_init__(self):
        self.weight = as_complex_matrix(self.weight, "weight")
        self.bias = as_complex_vector(self.bias, "bias")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError("weight and bias widths differ")


@dataclass(eq=False)
class DenseReluNetwork:
    layers: List[DenseLayer]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a network needs at least one layer")
        widths = {layer.bias.shape[0] for layer in self.layers}
        if len(widths) != 1:
            raise ValueError(f"all layers must share one width, got {sorted(widths)}")

    @property
    def width(self) -> int:
        return self.layers[0].bias.shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @classmethod
    def from_weights(cls, weights: Sequence, biases: Optional[Sequence] = None,
                     activation: Optional[Activation] = None) -> "DenseReluNetwork":
        act = activation or Activation.relu()
        if biases is None:
            biases = [np.zeros(np.shape(W)[0], dtype=complex) for W in weights]
        return cls([DenseLayer(W, b, act) for W, b in zip(weights, biases)])


def dense_forward(net: DenseReluNetwork, x) -> np.ndarray:
    h = np.asarray(x, dtype=complex)
    for layer in net.layers:
        h = layer.activation(h @ layer.weight.T + layer.bias)
    return h


def layer_outputs(net: DenseReluNetwork, x) -> List[np.ndarray]:
    """Input followed by the output of every layer."""
    h = np.asarray(x, dtype=complex)
    outs = [h]
    for layer in net.layers:
        h = layer.activation(h @ layer.weight.T + layer.bias)
        outs.append(h)
    return outs


def total_rank(net: DenseReluNetwork, tol: float = 1e-10) -> int:
    return sum(numeric_rank(layer.weight, tol) for layer in net.layers)


class ParamCount(NamedTuple):
    complex_weights: int
    complex_biases: int
    real_params: int


def param_count(n: int, L: int) -> ParamCount:
    if n < 1 or L < 1:
        raise ValueError("width and depth must be positive")
    weights = 2 * n * L
    biases = n * L
    return ParamCount(weights, biases, 2 * (weights + biases))


def dense_param_count(n: int, L: int) -> ParamCount:
    weights = n * n * L
    biases = n * L
    return ParamCount(weights, biases, 2 * (weights + biases))


@dataclass(frozen=True)
class ActivationPattern:
    """Nonlinearity on every ``relu_every``-th DC block (1-based), identity elsewhere.

    ``slope=0`` gives plain complex ReLU, a slope in (0, 1] the leaky variant.
    """

    relu_every: int = 3
    slope: float = 0.5

    def __post_init__(self):
        if self.relu_every < 1:
            raise ValueError("relu_every must be >= 1")
        if not (0.0 <= self.slope <= 1.0):
            raise ValueError("slope must be in [0, 1]")

    def activation(self) -> Activation:
        return Activation.relu() if self.slope == 0.0 else Activation.leaky(self.slope)


def build_dcnn(n: int, L: int, pattern: ActivationPattern = ActivationPattern(),
               last_identity: bool = True) -> DCNetwork:
    """Identity-weighted DC network with activations placed by ``pattern``."""
    if L < 1:
        raise ValueError("depth must be >= 1")
    layers = []
    for i in range(1, L + 1):
        if i % pattern.relu_every == 0 and not (last_identity and i == L):
            act = pattern.activation()
        else:
            act = Activation.identity()
        layers.append(DCLayer.identity(n, act))
    return DCNetwork(layers)
