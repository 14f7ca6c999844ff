import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dcnn.estimators import DCNNClassifier, DCNNRegressor
from dcnn.training import synth_regression, two_class


def test_params_and_clone():
    est = DCNNRegressor(depth=3, width=16, relu_every=None)
    params = clone(est).get_params()
    assert params["depth"] == 3 and params["relu_every"] is None
    est.set_params(depth=5)
    assert est.depth == 5


def test_regressor_fits_linear_data():
    d = synth_regression(400, 4, 2, seed=0, noise_var=0.0)
    est = DCNNRegressor(depth=2, width=8, relu_every=None, epochs=60, learning_rate=3e-3).fit(d.inputs, d.targets)
    assert est.predict(d.inputs).shape == (400, 2)
    assert est.score(d.inputs, d.targets) > 0.999
    y1 = d.targets[:, 0]
    est1 = DCNNRegressor(depth=2, width=8, relu_every=None, epochs=5).fit(d.inputs, y1)
    assert est1.predict(d.inputs).shape == (400,)


def test_classifier_labels_and_proba():
    d = two_class(600, 6, seed=3)
    labels = np.where(d.targets == 1, "yes", "no")
    clf = DCNNClassifier(depth=3, relu_every=None, epochs=10, learning_rate=1e-2).fit(d.inputs, labels)
    assert set(clf.predict(d.inputs)) <= {"yes", "no"}
    proba = clf.predict_proba(d.inputs[:5])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert clf.score(d.inputs, labels) > 0.8


def test_validation():
    with pytest.raises(NotFittedError):
        DCNNRegressor().predict(np.zeros((2, 3)))
    est = DCNNRegressor(depth=1, epochs=1).fit(np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        DCNNRegressor(width=2).fit(np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        DCNNClassifier().fit(np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        DCNNRegressor().fit(np.array([[np.nan, 1.0]]), [1.0])
