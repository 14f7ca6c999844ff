"""scikit-learn style wrappers around DC network training."""

from typing import List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_is_fitted, validate_data

from .initialization import InitConfig, init_dcnn
from .layers import ActivationPattern, DCLayer, DCNetwork, build_dcnn, dcnn_forward
from .training import Dataset, TrainConfig, embed_inputs, scaled_schedule, train


class _DCNNBase(BaseEstimator):
    """Shared parameters.

    ``relu_every=None`` builds a purely linear network. ``lr_schedule`` is a
    list of ``(step, rate)`` pairs; when omitted a four-stage schedule with
    base rate ``learning_rate`` is spread over the whole run.
    """

    def __init__(self, depth: int = 4, width: Optional[int] = None, relu_every: Optional[int] = 3,
                 slope: float = 0.5, epochs: int = 20, batch_size: int = 50,
                 learning_rate: float = 1e-3, lr_schedule: Optional[List[Tuple[int, float]]] = None,
                 sigma_prime: float = 1e-2, grad_clip_norm: Optional[float] = None,
                 random_state: int = 0):
        self.depth = depth
        self.width = width
        self.relu_every = relu_every
        self.slope = slope
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.sigma_prime = sigma_prime
        self.grad_clip_norm = grad_clip_norm
        self.random_state = random_state

    def _shape(self, n: int) -> DCNetwork:
        if self.relu_every is None:
            return DCNetwork([DCLayer.identity(n) for _ in range(self.depth)])
        return build_dcnn(n, self.depth, ActivationPattern(self.relu_every, self.slope),
                          last_identity=True)

    def _fit(self, X, targets, task: str, d_out: int, loss: str, meta: dict):
        n = self.width or max(X.shape[1], d_out)
        if n < max(X.shape[1], d_out):
            raise ValueError(f"width {n} is smaller than the input or output dimension")
        seed = int(self.random_state or 0)
        steps = self.epochs * -(-X.shape[0] // self.batch_size)
        schedule = self.lr_schedule or scaled_schedule(self.learning_rate, max(steps, 1))
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr_schedule=list(schedule),
                          grad_clip_norm=self.grad_clip_norm, seed=seed, loss=loss)
        net = init_dcnn(self._shape(n), InitConfig(seed=seed, sigma_prime=self.sigma_prime))
        self.network_, self.metrics_ = train(net, Dataset(X, targets, task, meta), cfg)
        self.n_outputs_ = d_out
        return self

    def _outputs(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = validate_data(self, X, reset=False)
        return dcnn_forward(self.network_, embed_inputs(X, self.network_.width))[:, :self.n_outputs_].real


class DCNNRegressor(RegressorMixin, _DCNNBase):
    """Regression with squared loss on the leading real outputs of a DC network."""

    def fit(self, X, y):
        X, y = validate_data(self, X, y, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        Y = y.reshape(len(y), -1).astype(float)
        return self._fit(X, Y, "regression", Y.shape[1], "mse", {})

    def predict(self, X):
        out = self._outputs(X)
        return out[:, 0] if self._y_1d else out


class DCNNClassifier(ClassifierMixin, _DCNNBase):
    """Softmax classification; logits are the real parts of the first ``n_classes`` outputs."""

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        labels = self._encoder.transform(y)
        k = len(self.classes_)
        return self._fit(X, labels, "classification", k, "xent", {"n_classes": k})

    def decision_function(self, X):
        return self._outputs(X)

    def predict_proba(self, X):
        z = self._outputs(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self._outputs(X), axis=1)]
