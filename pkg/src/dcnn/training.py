"""Backpropagation through DC networks, Adam training and the small experiment harness.

Complex parameters are trained as independent (real, imaginary) pairs. A
gradient with respect to a complex quantity ``p`` is stored as
``dL/dRe(p) + 1j * dL/dIm(p)``; with that convention a linear map ``M`` passes
gradients back through ``M^H``.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .fft import dft, idft
from .initialization import InitConfig, init_dcnn, layer_rng
from .layers import Activation, ActivationPattern, DCLayer, DCNetwork, build_dcnn, dcnn_forward
from .linalg import NumericalError


class LayerGradients(NamedTuple):
    d_diag: np.ndarray
    d_circ: np.ndarray
    d_bias: np.ndarray


class _Cache(NamedTuple):
    x_hat: np.ndarray
    v: np.ndarray
    z: np.ndarray


def _layer_forward(layer: DCLayer, x: np.ndarray):
    x_hat = dft(x)
    v = idft(layer.circ.spectrum * x_hat)
    z = layer.diag.entries * v + layer.bias
    return layer.activation(z), _Cache(x_hat, v, z)


def _activation_grad(act: Activation, z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if act.kind == "identity":
        return upstream
    s = act.negative_slope
    # sub-derivative at exactly 0 is taken as the negative-side slope
    m_re = np.where(z.real > 0, 1.0, s)
    m_im = np.where(z.imag > 0, 1.0, s)
    return upstream.real * m_re + 1j * (upstream.imag * m_im)


def backward_dc_layer(layer: DCLayer, x, upstream, cache: Optional[_Cache] = None):
    """Gradients of a DC layer given the upstream gradient at its output.

    ``x`` and ``upstream`` may be batched along leading axes; parameter
    gradients are summed over the batch.
    """
    x = np.asarray(x, dtype=complex)
    upstream = np.asarray(upstream, dtype=complex)
    if x.shape[-1] != layer.width or upstream.shape != x.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, upstream {upstream.shape}, width {layer.width}")
    if cache is None:
        _, cache = _layer_forward(layer, x)
    g_z = _activation_grad(layer.activation, cache.z, upstream)
    batch_axes = tuple(range(g_z.ndim - 1))
    d_bias = g_z.sum(axis=batch_axes)
    d_diag = (cache.v.conj() * g_z).sum(axis=batch_axes)
    g_v = layer.diag.entries.conj() * g_z
    g_v_hat = dft(g_v)
    d_circ = idft((cache.x_hat.conj() * g_v_hat).sum(axis=batch_axes))
    downstream = idft(layer.circ.spectrum.conj() * g_v_hat)
    return downstream, LayerGradients(d_diag, d_circ, d_bias)


def forward_with_cache(net: DCNetwork, X) -> Tuple[np.ndarray, List[_Cache], List[np.ndarray]]:
    h = np.asarray(X, dtype=complex)
    caches, inputs = [], []
    for layer in net.layers:
        inputs.append(h)
        h, cache = _layer_forward(layer, h)
        caches.append(cache)
    return h, caches, inputs


def network_gradients(net: DCNetwork, X, upstream) -> Tuple[List[LayerGradients], np.ndarray]:
    _, caches, inputs = forward_with_cache(net, X)
    g = np.asarray(upstream, dtype=complex)
    grads: List[LayerGradients] = []
    for layer, cache, x in zip(reversed(net.layers), reversed(caches), reversed(inputs)):
        g, lg = backward_dc_layer(layer, x, g, cache)
        grads.append(lg)
    grads.reverse()
    return grads, g


# -- losses -----------------------------------------------------------------

def mse_loss(out: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Per-example squared error summed over the leading ``targets.shape[1]`` outputs, averaged over examples."""
    out = np.atleast_2d(out)
    targets = np.atleast_2d(targets)
    B, m = targets.shape
    resid = out[:, :m] - targets
    loss = float(np.sum(np.abs(resid) ** 2) / B)
    grad = np.zeros_like(out)
    grad[:, :m] = 2.0 * resid / B
    return loss, grad


def softmax_xent(logits, labels) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy of real logits ``(B, C)`` against integer labels."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    B = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    loss = float(-logp[np.arange(B), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B


def classification_loss(out: np.ndarray, labels: np.ndarray, n_classes: int):
    loss, g_logits = softmax_xent(out[:, :n_classes].real, labels)
    grad = np.zeros_like(out)
    grad[:, :n_classes] = g_logits
    return loss, grad


# -- optimizer --------------------------------------------------------------

class Adam:
    """Adam on the real views of a list of complex parameter arrays."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros(p.size * 2) for p in params]
            self.v = [np.zeros(p.size * 2) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = np.ascontiguousarray(g, dtype=complex).view(float)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.view(float)[...] -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


class PiecewiseConstant:
    """Learning rate ``rates[i]`` from step ``thresholds[i]`` onwards."""

    def __init__(self, schedule: Sequence[Tuple[int, float]]):
        if not schedule:
            raise ValueError("empty learning-rate schedule")
        steps = [int(s) for s, _ in schedule]
        rates = [float(r) for _, r in schedule]
        if steps[0] != 0:
            raise ValueError("schedule must start at step 0")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("schedule thresholds must be strictly increasing")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ValueError("learning rates must be finite and non-negative")
        self.steps = steps
        self.rates = rates

    def __call__(self, step: int) -> float:
        i = 0
        while i + 1 < len(self.steps) and step >= self.steps[i + 1]:
            i += 1
        return self.rates[i]

    def boundaries(self) -> List[int]:
        return self.steps[1:]

    @classmethod
    def parse(cls, text: str) -> "PiecewiseConstant":
        """``"0:5e-3,400:2.5e-3,600:5e-4"`` style schedules."""
        try:
            pairs = [item.split(":") for item in text.split(",") if item.strip()]
            return cls([(int(s), float(r)) for s, r in pairs])
        except (ValueError, TypeError) as exc:
            raise ValueError(f"invalid schedule {text!r}: {exc}") from exc


REFERENCE_RATES = (5e-5, 2.5e-5, 5e-6, 1e-6)


def scaled_schedule(base_lr: float, total_steps: int) -> List[Tuple[int, float]]:
    """Four-stage piecewise-constant schedule with the relative rates 1, 1/2, 1/10, 1/50.

    Boundaries sit at 40%, 60% and 80% of ``total_steps``.
    """
    fracs = (0.0, 0.4, 0.6, 0.8)
    out = []
    for f, r in zip(fracs, REFERENCE_RATES):
        s = int(round(f * total_steps))
        if out and s <= out[-1][0]:
            continue
        out.append((s, base_lr * r / REFERENCE_RATES[0]))
    return out


# -- data -------------------------------------------------------------------

@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    task: str  # "regression" or "classification"
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if self.task == "classification":
            self.targets = np.asarray(self.targets, dtype=int).reshape(-1)
        elif self.task == "regression":
            self.targets = np.asarray(self.targets, dtype=float)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
        else:
            raise ValueError(f"unknown task {self.task!r}")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets have different lengths")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def d_out(self) -> int:
        if self.task == "classification":
            return int(self.metadata.get("n_classes", int(self.targets.max()) + 1))
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], self.task, dict(self.metadata))

    def split(self, n_train: int) -> Tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_train)), self.subset(slice(n_train, None))


def synth_regression(num_samples: int, d_in: int, d_out: int, seed: int = 0,
                     noise_var: float = 0.01) -> Dataset:
    """``Y = X W + noise`` with ``X``, ``W`` uniform on [-1, 1] and Gaussian noise."""
    if min(num_samples, d_in, d_out) < 1:
        raise ValueError("dimensions must be positive")
    rng = layer_rng(seed, 0, stream=100)
    W = rng.uniform(-1.0, 1.0, size=(d_in, d_out))
    X = rng.uniform(-1.0, 1.0, size=(num_samples, d_in))
    noise = rng.normal(0.0, math.sqrt(noise_var), size=(num_samples, d_out))
    meta = {"generator": "regression", "seed": seed, "noise_var": noise_var, "W": W.tolist(),
            "d_in": d_in, "d_out": d_out}
    return Dataset(X, X @ W + noise, "regression", meta)


def two_class(num_samples: int, dim: int, seed: int = 0, flip: float = 0.1) -> Dataset:
    """Gaussian inputs labelled by a random hyperplane through the origin, with label noise.

    The sign symmetry of the input distribution keeps the classes balanced.
    """
    if min(num_samples, dim) < 1:
        raise ValueError("dimensions must be positive")
    rng = layer_rng(seed, 0, stream=101)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    X = rng.normal(size=(num_samples, dim))
    y = (X @ w > 0).astype(int)
    flips = rng.random(num_samples) < flip
    y = np.where(flips, 1 - y, y)
    meta = {"generator": "two_class", "seed": seed, "flip": flip, "w": w.tolist(),
            "n_classes": 2, "d_in": dim}
    return Dataset(X, y, "classification", meta)


def embed_inputs(X: np.ndarray, width: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] > width:
        raise ValueError(f"input dimension {X.shape[1]} exceeds network width {width}")
    out = np.zeros((X.shape[0], width), dtype=complex)
    out[:, :X.shape[1]] = X
    return out


# -- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 50
    lr_schedule: List[Tuple[int, float]] = field(default_factory=lambda: [(0, 1e-3)])
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: Optional[float] = None
    seed: int = 0
    loss: str = "mse"  # or "xent"

    def __post_init__(self):
        PiecewiseConstant(self.lr_schedule)
        if self.loss not in ("mse", "xent"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class MetricsLog:
    records: List[Dict] = field(default_factory=list)

    def add(self, **record) -> None:
        if self.records and record["step"] < self.records[-1]["step"]:
            raise ValueError("metrics steps must be non-decreasing")
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def epoch_losses(self) -> List[float]:
        return [r["loss"] for r in self.records if r.get("event") == "epoch"]


class TrainingDiverged(NumericalError):
    def __init__(self, message: str, checkpoint: DCNetwork, log: MetricsLog):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.log = log


def _params(net: DCNetwork) -> List[np.ndarray]:
    out = []
    for layer in net.layers:
        out += [layer.diag.entries, layer.circ.coeffs, layer.bias]
    return out


def _refresh(net: DCNetwork) -> None:
    for layer in net.layers:
        layer.circ._spectrum = None


def _loss_and_grad(net: DCNetwork, X: np.ndarray, y: np.ndarray, cfg: TrainConfig, n_out: int):
    out, caches, inputs = forward_with_cache(net, X)
    if cfg.loss == "mse":
        loss, g = mse_loss(out, y)
    else:
        loss, g = classification_loss(out, y, n_out)
    grads = []
    for layer, cache, x in zip(reversed(net.layers), reversed(caches), reversed(inputs)):
        g, lg = backward_dc_layer(layer, x, g, cache)
        grads.append(lg)
    grads.reverse()
    return loss, grads


def evaluate(net: DCNetwork, data: Dataset, loss: str) -> Tuple[float, Optional[float]]:
    out = dcnn_forward(net, embed_inputs(data.inputs, net.width))
    if loss == "mse":
        return mse_loss(out, data.targets)[0], None
    value, _ = classification_loss(out, data.targets, data.d_out)
    pred = np.argmax(out[:, :data.d_out].real, axis=1)
    return value, float(np.mean(pred == data.targets))


def train(net: DCNetwork, data: Dataset, cfg: TrainConfig,
          eval_data: Optional[Dataset] = None) -> Tuple[DCNetwork, MetricsLog]:
    """Minibatch Adam. Returns a trained copy of ``net`` and its metrics.

    The last minibatch of an epoch may be smaller than ``batch_size``. Its
    loss is averaged over the examples it holds, which is the same as padding
    it with zero-weight examples. Metrics are recorded after every
    epoch and whenever the learning rate changes.
    """
    net = copy.deepcopy(net)
    if (cfg.loss == "mse") != (data.task == "regression"):
        raise ValueError(f"loss {cfg.loss!r} does not fit a {data.task} dataset")
    if data.d_out > net.width:
        raise ValueError("network narrower than the number of outputs")
    X = embed_inputs(data.inputs, net.width)
    y = data.targets
    n_out = data.d_out
    schedule = PiecewiseConstant(cfg.lr_schedule)
    boundaries = set(schedule.boundaries())
    opt = Adam(schedule(0), cfg.beta1, cfg.beta2, cfg.eps)
    params = _params(net)
    rng = layer_rng(cfg.seed, 0, stream=200)
    log = MetricsLog()
    last_good = copy.deepcopy(net)
    step = 0

    def record(event: str, epoch: int):
        loss, acc = evaluate(net, data, cfg.loss)
        rec = {"event": event, "step": step, "epoch": epoch, "loss": loss,
               "learning_rate": schedule(step)}
        if acc is not None:
            rec["accuracy"] = acc
        if eval_data is not None:
            tl, ta = evaluate(net, eval_data, cfg.loss)
            rec["test_loss"] = tl
            if ta is not None:
                rec["test_accuracy"] = ta
        log.add(**rec)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}", last_good, log)

    # overflow and NaN are caught explicitly through the loss checks
    with np.errstate(over="ignore", invalid="ignore"):
        record("epoch", 0)
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(data))
            for start in range(0, len(data), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = _loss_and_grad(net, X[idx], y[idx], cfg, n_out)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at step {step}", last_good, log)
                flat = [g for lg in grads for g in lg]
                if cfg.grad_clip_norm is not None:
                    norm = math.sqrt(sum(float(np.vdot(g, g).real) for g in flat))
                    if norm > cfg.grad_clip_norm:
                        flat = [g * (cfg.grad_clip_norm / norm) for g in flat]
                opt.lr = schedule(step)
                opt.step(params, flat)
                _refresh(net)
                step += 1
                if step in boundaries:
                    record("schedule", epoch)
            record("epoch", epoch)
            last_good = copy.deepcopy(net)
    return net, log


# -- gradient checking ------------------------------------------------------

def _fd_loss(net: DCNetwork, X: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum((w.conj() * dcnn_forward(net, X)).real))


def grad_check(net: DCNetwork, x, h: float = 1e-5, seed: int = 0, corrupt: bool = False) -> float:
    """Max relative error between backprop and central differences.

    Uses the scalar loss ``Re(<w, N(x)>)`` for a fixed random ``w``; every real
    and imaginary component of every parameter and of the input is perturbed.
    ``corrupt`` deliberately breaks one gradient term, for testing the checker.
    """
    net = copy.deepcopy(net)
    X = np.atleast_2d(np.asarray(x, dtype=complex))
    rng = np.random.default_rng(seed)
    w = rng.normal(size=X.shape) + 1j * rng.normal(size=X.shape)
    grads, d_input = network_gradients(net, X, w)
    analytic = [g for lg in grads for g in lg] + [d_input]
    if corrupt:
        analytic[0] = analytic[0].conj()

    params = _params(net) + [X]
    numeric = []
    for p in params:
        flat = p.reshape(-1)
        g = np.zeros(flat.shape, dtype=complex)
        for i in range(flat.size):
            for unit in (1.0, 1j):
                orig = flat[i]
                flat[i] = orig + h * unit
                _refresh(net)
                up = _fd_loss(net, X, w)
                flat[i] = orig - h * unit
                _refresh(net)
                down = _fd_loss(net, X, w)
                flat[i] = orig
                _refresh(net)
                d = (up - down) / (2 * h)
                g[i] += d if unit == 1.0 else 1j * d
        numeric.append(g.reshape(p.shape))

    a = np.concatenate([np.ravel(v) for v in analytic]).view(float)
    f = np.concatenate([np.ravel(v) for v in numeric]).view(float)
    floor = 1e-6 * max(1.0, float(np.abs(f).max()))
    return float(np.max(np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)))


# -- nonlinearity-placement experiment --------------------------------------

def relu_frequency_experiment(depths: Sequence[int], patterns: Sequence[int], slopes: Sequence[float],
                              train_data: Dataset, test_data: Dataset, cfg: TrainConfig,
                              width: Optional[int] = None, sigma_prime: float = 1e-2) -> List[Dict]:
    """Final test accuracy for every (depth, relu_every, slope) combination.

    The last layer is always linear so its real parts serve as logits.
    """
    width = width or max(train_data.d_in, train_data.d_out)
    rows = []
    for depth in depths:
        for m in patterns:
            for slope in slopes:
                shape = build_dcnn(width, depth, ActivationPattern(m, slope), last_identity=True)
                net = init_dcnn(shape, InitConfig(seed=cfg.seed, sigma_prime=sigma_prime))
                row = {"depth": depth, "relu_every": m, "slope": slope}
                try:
                    trained, log = train(net, train_data, cfg, test_data)
                    rec = log.records[-1]
                    row.update(test_accuracy=rec["test_accuracy"], train_loss=rec["loss"],
                               diverged=False)
                except TrainingDiverged:
                    row.update(test_accuracy=float("nan"), train_loss=float("nan"), diverged=True)
                rows.append(row)
    return rows
