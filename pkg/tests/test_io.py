import json

import numpy as np
import pytest

from dcnn.decomposition import full_decompose
from dcnn.initialization import InitConfig, init_dcnn
from dcnn.io import (
    FormatError,
    decode_complex,
    dumps,
    encode_complex,
    load_array,
    load_dataset,
    load_metrics,
    load_model,
    model_from_dict,
    model_to_dict,
    save_array,
    save_dataset,
    save_metrics,
    save_model,
)
from dcnn.layers import ActivationPattern, DenseReluNetwork, build_dcnn, dcnn_forward, param_count
from dcnn.training import MetricsLog, synth_regression, two_class

from conftest import crandn


def _roundtrip(tmp_path, model, prov=None):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(str(a), model, prov)
    loaded, p = load_model(str(a))
    save_model(str(b), loaded, p)
    assert a.read_bytes() == b.read_bytes()
    return loaded


class TestModels:
    def test_dcnn_round_trip(self, tmp_path, rng):
        net = init_dcnn(build_dcnn(8, 5, ActivationPattern(2, 0.5)), InitConfig(seed=1, sigma_prime=0.1))
        net.layers[0].bias = net.layers[0].bias + 1j * np.pi  # awkward floats survive too
        loaded = _roundtrip(tmp_path, net, {"seed": 1})
        x = crandn(rng, 8)
        np.testing.assert_array_equal(dcnn_forward(loaded, x), dcnn_forward(net, x))

    def test_dense_and_factor_round_trip(self, tmp_path, rng):
        _roundtrip(tmp_path, DenseReluNetwork.from_weights([crandn(rng, 4, 4)]))
        seq = full_decompose(crandn(rng, 8, 1) @ crandn(rng, 1, 8), 1)
        loaded = _roundtrip(tmp_path, seq)
        assert loaded.kinds() == seq.kinds()

    def test_scalar_count_matches_param_count(self, rng):
        n, L = 6, 4
        d = model_to_dict(init_dcnn(build_dcnn(n, L)))
        floats = sum(np.asarray(layer[key]).size for layer in d["layers"] for key in ("diag", "circ", "bias"))
        assert floats == param_count(n, L).real_params

    def test_unknown_version(self, rng):
        d = model_to_dict(init_dcnn(build_dcnn(4, 1)))
        d["version"] = 99
        with pytest.raises(FormatError):
            model_from_dict(d)

    def test_malformed(self):
        with pytest.raises(FormatError):
            model_from_dict({"version": 1, "kind": "dcnn", "width": 2, "layers": [{"diag": [1, 2]}]})
        with pytest.raises(FormatError):
            model_from_dict({"version": 1, "kind": "mystery", "width": 2})
        with pytest.raises(FormatError):
            decode_complex([[1.0, float("nan")]], 1)

    def test_canonical_text(self):
        assert dumps({"b": 1, "a": [0.1, 2]}) == '{"a":[0.1,2],"b":1}\n'
        np.testing.assert_array_equal(decode_complex(encode_complex([1 + 2j, -3j]), 1), [1 + 2j, -3j])


class TestArraysAndData:
    def test_array_formats(self, tmp_path, rng):
        A = crandn(rng, 3, 3)
        save_array(str(tmp_path / "m.json"), A)
        np.testing.assert_array_equal(load_array(str(tmp_path / "m.json"), 2), A)
        np.save(tmp_path / "m.npy", A)
        np.testing.assert_array_equal(load_array(str(tmp_path / "m.npy"), 2), A)
        (tmp_path / "plain.json").write_text(json.dumps({"inputs": [[1, 2], [3, 4]]}))
        np.testing.assert_array_equal(load_array(str(tmp_path / "plain.json"), 2), [[1, 2], [3, 4]])
        with pytest.raises(FormatError):
            load_array(str(tmp_path / "m.txt"), 2)

    def test_dataset_round_trip(self, tmp_path):
        for data in (synth_regression(20, 3, 2, seed=4), two_class(20, 3, seed=4)):
            path = str(tmp_path / f"{data.task}.csv")
            save_dataset(path, data)
            back = load_dataset(path)
            assert back.task == data.task
            np.testing.assert_array_equal(back.inputs, data.inputs)
            np.testing.assert_array_equal(back.targets, data.targets)
            assert back.metadata["seed"] == 4
        header = (tmp_path / "classification.csv").read_text().splitlines()[0]
        assert header == "x0,x1,x2,label"

    def test_bad_dataset(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x0,label\n0.5,1.5\n")
        with pytest.raises(FormatError):
            load_dataset(str(p))
        p.write_text("x0,y0\n0.5\n")
        with pytest.raises(FormatError):
            load_dataset(str(p))

    def test_metrics_round_trip(self, tmp_path):
        log = MetricsLog()
        log.add(step=0, epoch=0, loss=1.5, learning_rate=1e-3)
        log.add(step=4, epoch=1, loss=0.5, learning_rate=1e-3)
        save_metrics(str(tmp_path / "m.jsonl"), log)
        assert load_metrics(str(tmp_path / "m.jsonl")).records == log.records
