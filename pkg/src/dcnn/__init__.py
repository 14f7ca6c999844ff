"""Diagonal-circulant neural networks: structured layers, decompositions, training and bounds."""

from .fft import dft, idft
from .linalg import CirculantMatrix, DiagonalMatrix, NumericalError, operator_norm, svd
from .layers import (
    Activation,
    ActivationPattern,
    DCLayer,
    DCNetwork,
    DenseLayer,
    DenseReluNetwork,
    build_dcnn,
    dcnn_forward,
    dense_forward,
    param_count,
)
from .decomposition import (
    FactorSequence,
    compress_network,
    full_decompose,
    rank_reduce,
    shifted_diag_decompose,
    sum_to_product,
)
from .initialization import InitConfig, covariance_probe, init_dcnn
from .training import Dataset, TrainConfig, grad_check, train
from .bounds import BoundReport, network_svd_bound, dc_compression_bound
from .estimators import DCNNClassifier, DCNNRegressor

__version__ = "0.1.0"

__all__ = [
    "Activation", "ActivationPattern", "BoundReport", "CirculantMatrix", "DCLayer", "DCNNClassifier",
    "DCNNRegressor", "DCNetwork", "Dataset", "DenseLayer", "DenseReluNetwork", "DiagonalMatrix",
    "FactorSequence", "InitConfig", "NumericalError", "TrainConfig", "build_dcnn", "compress_network",
    "covariance_probe", "dc_compression_bound", "dcnn_forward", "dense_forward", "dft", "full_decompose",
    "grad_check", "idft", "init_dcnn", "network_svd_bound", "operator_norm", "param_count", "rank_reduce",
    "shifted_diag_decompose", "sum_to_product", "svd", "train",
]
