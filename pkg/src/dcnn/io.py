"""JSON model files, CSV datasets and JSON-lines metrics."""

import csv
import hashlib
import json
import os
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .decomposition import FactorSequence
from .layers import (
    Activation,
    DCLayer,
    DCNetwork,
    DenseLayer,
    DenseReluNetwork,
    param_count,
)
from .linalg import CirculantMatrix, DiagonalMatrix
from .training import Dataset, MetricsLog

FORMAT_VERSION = 1
Model = Union[DCNetwork, DenseReluNetwork, FactorSequence]


class FormatError(ValueError):
    """Malformed or unsupported file."""


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, no whitespace, shortest round-tripping floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def config_hash(config: Dict) -> str:
    return hashlib.sha256(dumps(config).encode()).hexdigest()[:16]


def encode_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    pairs = np.stack([a.real, a.imag], axis=-1)
    return pairs.tolist()


def decode_complex(data, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"expected nested [re, im] pairs: {exc}") from exc
    if arr.ndim != ndim + 1 or arr.shape[-1] != 2:
        raise FormatError(f"expected a {ndim}-d array of [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError("non-finite value in model file")
    # assign parts separately; re + 1j*im turns a -0.0 real part into 0.0
    out = np.empty(arr.shape[:-1], dtype=complex)
    out.real, out.imag = arr[..., 0], arr[..., 1]
    return out


def model_to_dict(model: Model, provenance: Optional[Dict] = None) -> Dict:
    prov = dict(provenance or {})
    if isinstance(model, DCNetwork):
        body = {
            "kind": "dcnn",
            "width": model.width,
            "layers": [
                {
                    "diag": encode_complex(l.diag.entries),
                    "circ": encode_complex(l.circ.coeffs),
                    "bias": encode_complex(l.bias),
                    "activation": l.activation.to_dict(),
                }
                for l in model.layers
            ],
        }
    elif isinstance(model, DenseReluNetwork):
        body = {
            "kind": "dense",
            "width": model.width,
            "layers": [
                {
                    "weight": encode_complex(l.weight),
                    "bias": encode_complex(l.bias),
                    "activation": l.activation.to_dict(),
                }
                for l in model.layers
            ],
        }
    elif isinstance(model, FactorSequence):
        err = model.reconstruction_error
        body = {
            "kind": "factor_sequence",
            "width": model.width,
            "factors": [
                {"type": "circulant" if isinstance(f, CirculantMatrix) else "diagonal",
                 "coeffs": encode_complex(f.coeffs if isinstance(f, CirculantMatrix) else f.entries)}
                for f in model.factors
            ],
            "reconstruction_error": None if err is None or not np.isfinite(err) else float(err),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    body["version"] = FORMAT_VERSION
    body["provenance"] = prov
    return body


def _activation(d) -> Activation:
    try:
        return Activation.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad activation descriptor {d!r}: {exc}") from exc


def model_from_dict(d: Dict) -> Tuple[Model, Dict]:
    if not isinstance(d, dict):
        raise FormatError("model file must hold a JSON object")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model file version {d.get('version')!r}")
    kind = d.get("kind")
    try:
        width = int(d["width"])
        if kind == "dcnn":
            layers = [
                DCLayer(DiagonalMatrix(decode_complex(l["diag"], 1)),
                        CirculantMatrix(decode_complex(l["circ"], 1)),
                        decode_complex(l["bias"], 1), _activation(l["activation"]))
                for l in d["layers"]
            ]
            model: Model = DCNetwork(layers)
            expected = param_count(width, model.depth)
            scalars = sum(l.diag.n + l.circ.n + l.bias.shape[0] for l in layers)
            if scalars != expected.complex_weights + expected.complex_biases:
                raise FormatError("scalar count does not match the parameter formula")
        elif kind == "dense":
            model = DenseReluNetwork([
                DenseLayer(decode_complex(l["weight"], 2), decode_complex(l["bias"], 1),
                           _activation(l["activation"]))
                for l in d["layers"]
            ])
        elif kind == "factor_sequence":
            factors = []
            for f in d["factors"]:
                coeffs = decode_complex(f["coeffs"], 1)
                if f["type"] == "circulant":
                    factors.append(CirculantMatrix(coeffs))
                elif f["type"] == "diagonal":
                    factors.append(DiagonalMatrix(coeffs))
                else:
                    raise FormatError(f"unknown factor type {f['type']!r}")
            err = d.get("reconstruction_error")
            model = FactorSequence(factors, float("nan") if err is None else float(err))
        else:
            raise FormatError(f"unknown model kind {kind!r}")
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed {kind} model: {exc}") from exc
    if model.width != width:
        raise FormatError(f"declared width {width} does not match the data ({model.width})")
    return model, dict(d.get("provenance", {}))


def save_model(path: str, model: Model, provenance: Optional[Dict] = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model_to_dict(model, provenance)))


def load_model(path: str) -> Tuple[Model, Dict]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return model_from_dict(data)


# -- arrays (matrices, input sets) ------------------------------------------

def load_array(path: str, ndim: int) -> np.ndarray:
    """Complex array from ``.npy``, ``.json`` or a real-valued ``.csv`` with a header row.

    JSON may hold plain numbers or [re, im] pairs, either bare or under a
    ``"matrix"``/``"inputs"`` key.
    """
    ext = os.path.splitext(path)[1].lower()
    if ext == ".npy":
        arr = np.load(path, allow_pickle=False).astype(complex)
    elif ext == ".json":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        if isinstance(data, dict):
            for key in ("matrix", "inputs", "samples"):
                if key in data:
                    data = data[key]
                    break
            else:
                raise FormatError(f"{path}: no matrix/inputs/samples key")
        raw = np.asarray(data, dtype=float)
        arr = decode_complex(data, ndim) if raw.ndim == ndim + 1 else raw.astype(complex)
    elif ext == ".csv":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2).astype(complex)
    else:
        raise FormatError(f"unsupported file type {ext!r}")
    if ndim == 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != ndim:
        raise FormatError(f"{path}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite values")
    return arr


def save_array(path: str, arr, key: str = "matrix") -> None:
    with open(path, "w") as fh:
        fh.write(dumps({key: encode_complex(arr)}))


# -- datasets ---------------------------------------------------------------

def save_dataset(path: str, data: Dataset) -> None:
    X, y = data.inputs, data.targets
    header = [f"x{i}" for i in range(X.shape[1])]
    if data.task == "classification":
        header.append("label")
        rows = ([repr(float(v)) for v in x] + [str(int(t))] for x, t in zip(X, y))
    else:
        header += [f"y{j}" for j in range(y.shape[1])]
        rows = ([repr(float(v)) for v in x] + [repr(float(v)) for v in t] for x, t in zip(X, y))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    with open(path + ".meta.json", "w") as fh:
        fh.write(dumps({"task": data.task, **data.metadata}))


def load_dataset(path: str) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty dataset file")
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no examples")
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: ragged rows")
    arr = np.asarray(rows)
    xs = [i for i, h in enumerate(header) if h.startswith("x")]
    meta: Dict = {}
    if os.path.exists(path + ".meta.json"):
        with open(path + ".meta.json") as fh:
            meta = json.load(fh)
        meta.pop("task", None)
    if not xs:
        raise FormatError(f"{path}: no input columns (x0, x1, ...)")
    if "label" in header:
        labels = arr[:, header.index("label")]
        if np.any(labels != np.round(labels)) or np.any(labels < 0):
            raise FormatError(f"{path}: labels must be non-negative integers")
        return Dataset(arr[:, xs], labels.astype(int), "classification", meta)
    ys = [i for i, h in enumerate(header) if h.startswith("y")]
    if not ys:
        raise FormatError(f"{path}: no target columns (y0, ... or label)")
    return Dataset(arr[:, xs], arr[:, ys], "regression", meta)


def save_metrics(path: str, log: MetricsLog) -> None:
    with open(path, "w") as fh:
        fh.write(log.to_jsonl())


def load_metrics(path: str) -> MetricsLog:
    log = MetricsLog()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                log.add(**json.loads(line))
    return log
