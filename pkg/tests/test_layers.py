import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcnn.layers import (
    Activation,
    ActivationPattern,
    DCLayer,
    DCNetwork,
    DenseLayer,
    DenseReluNetwork,
    build_dcnn,
    complex_relu,
    dc_layer_forward,
    dcnn_forward,
    dense_forward,
    dense_param_count,
    leaky_complex_relu,
    param_count,
    total_rank,
)
from dcnn.linalg import CirculantMatrix, DiagonalMatrix, materialize

from conftest import crandn


def random_layer(rng, n, act=None):
    return DCLayer(DiagonalMatrix(crandn(rng, n)), CirculantMatrix(crandn(rng, n) / np.sqrt(n)),
                   crandn(rng, n), act or Activation.relu())


class TestActivations:
    def test_relu_examples(self):
        assert complex_relu(3 + 2j) == 3 + 2j
        assert complex_relu(-1 + 2j) == 2j
        assert complex_relu(-1 - 2j) == 0

    def test_leaky(self, rng):
        z = crandn(rng, 50)
        np.testing.assert_array_equal(leaky_complex_relu(z, 1.0), z)
        assert leaky_complex_relu(-2 + 1j, 0.5) == -1 + 1j
        np.testing.assert_allclose(leaky_complex_relu(z, 1e-12), complex_relu(z), atol=1e-11)

    def test_relu_idempotent(self, rng):
        z = crandn(rng, 100)
        np.testing.assert_array_equal(complex_relu(complex_relu(z)), complex_relu(z))

    def test_slope_validation(self):
        with pytest.raises(ValueError):
            Activation("leaky_relu")
        with pytest.raises(ValueError):
            Activation("leaky_relu", 0.0)
        with pytest.raises(ValueError):
            Activation("relu", 0.5)
        with pytest.raises(ValueError):
            Activation("tanh")

    def test_dict_round_trip(self):
        for a in (Activation.relu(), Activation.leaky(0.25), Activation.identity()):
            assert Activation.from_dict(a.to_dict()) == a


class TestForward:
    def test_identity_layer(self, rng):
        x = crandn(rng, 6)
        np.testing.assert_allclose(dc_layer_forward(DCLayer.identity(6), x), x, atol=1e-14)

    def test_diag_only(self, rng):
        x, d = crandn(rng, 6), crandn(rng, 6)
        layer = DCLayer(DiagonalMatrix(d), CirculantMatrix.identity(6), np.zeros(6))
        np.testing.assert_allclose(dc_layer_forward(layer, x), d * x, atol=1e-14)

    def test_dense_oracle(self, rng):
        layer = random_layer(rng, 9)
        x = crandn(rng, 9)
        ref = complex_relu(np.diag(layer.diag.entries) @ materialize(layer.circ) @ x + layer.bias)
        assert np.linalg.norm(dc_layer_forward(layer, x) - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_network_composition(self, rng):
        x = crandn(rng, 5)
        net = DCNetwork([DCLayer.identity(5), DCLayer.identity(5)])
        np.testing.assert_allclose(dcnn_forward(net, x), x, atol=1e-14)
        layers = [random_layer(rng, 5) for _ in range(3)]
        h = x
        for layer in layers:
            h = dc_layer_forward(layer, h)
        np.testing.assert_allclose(dcnn_forward(DCNetwork(layers), x), h, atol=1e-12)

    def test_dense_forward(self, rng):
        x = crandn(rng, 4)
        net = DenseReluNetwork.from_weights([np.eye(4)], activation=Activation.identity())
        np.testing.assert_allclose(dense_forward(net, x), x)
        W = crandn(rng, 4, 4)
        b = crandn(rng, 4)
        net = DenseReluNetwork([DenseLayer(W, b)])
        np.testing.assert_allclose(dense_forward(net, x), complex_relu(W @ x + b), atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 10), st.integers(0, 10 ** 6))
    def test_dc_equals_materialized_dense(self, n, L, seed):
        rng = np.random.default_rng(seed)
        acts = [Activation.relu(), Activation.leaky(0.3), Activation.identity()]
        net = DCNetwork([random_layer(rng, n, acts[int(rng.integers(3))]) for _ in range(L)])
        X = crandn(rng, 3, n)
        a, b = dcnn_forward(net, X), dense_forward(net.to_dense(), X)
        assert np.linalg.norm(a - b) <= 1e-9 * max(np.linalg.norm(b), 1e-300)

    def test_linear_when_identity(self, rng):
        n = 8
        layers = [DCLayer(DiagonalMatrix(crandn(rng, n)), CirculantMatrix(crandn(rng, n)), np.zeros(n))
                  for _ in range(3)]
        net = DCNetwork(layers)
        x, y = crandn(rng, n), crandn(rng, n)
        a, b = 0.7 - 0.2j, -1.3j
        lhs = dcnn_forward(net, a * x + b * y)
        rhs = a * dcnn_forward(net, x) + b * dcnn_forward(net, y)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            DCNetwork([DCLayer.identity(3), DCLayer.identity(4)])
        with pytest.raises(ValueError):
            DCNetwork([])


class TestCountsAndPatterns:
    def test_param_count(self):
        assert param_count(4, 3) == (24, 12, 72)
        assert param_count(1, 1) == (2, 1, 6)
        assert param_count(3072, 2).complex_weights == 12_288
        n, L = 16, 3
        assert dense_param_count(n, L).complex_weights / param_count(n, L).complex_weights == n / 2
        with pytest.raises(ValueError):
            param_count(0, 1)

    def test_total_rank(self, rng):
        I = np.eye(4)
        assert total_rank(DenseReluNetwork.from_weights([I, I, I])) == 12
        u, v = crandn(rng, 4), crandn(rng, 4)
        assert total_rank(DenseReluNetwork.from_weights([np.outer(u, v), I])) == 5
        assert total_rank(DenseReluNetwork.from_weights([np.zeros((4, 4))] * 2)) == 0

    @staticmethod
    def _active(net):
        return [i + 1 for i, l in enumerate(net.layers) if l.activation.kind != "identity"]

    def test_build_patterns(self):
        assert self._active(build_dcnn(4, 6, ActivationPattern(3), last_identity=False)) == [3, 6]
        assert self._active(build_dcnn(4, 6, ActivationPattern(3), last_identity=True)) == [3]
        assert self._active(build_dcnn(4, 4, ActivationPattern(1), last_identity=False)) == [1, 2, 3, 4]
        assert self._active(build_dcnn(4, 5, ActivationPattern(2))) == [2, 4]

    def test_pattern_activation_kind(self):
        assert ActivationPattern(3, 0.0).activation() == Activation.relu()
        assert ActivationPattern(3, 0.5).activation() == Activation.leaky(0.5)
        with pytest.raises(ValueError):
            ActivationPattern(0)
