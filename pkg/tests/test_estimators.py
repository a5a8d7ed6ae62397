import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from unhinged_dynamics import schedules
from unhinged_dynamics.closed_form import regularized_state, unconstrained_state
from unhinged_dynamics.estimators import ClosedFormFlow
from unhinged_dynamics.shapes import ProblemShape, random_state
from unhinged_dynamics.subspaces import decompose

SHAPE = ProblemShape(5, 4, 3, 0.2)


def test_params_round_trip():
    est = ClosedFormFlow(regime="regularized", gamma=0.3, N=2, lambda1=0.1)
    assert est.get_params()["lambda1"] == 0.1
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(eta=0.5)
    assert est.eta == 0.5


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        ClosedFormFlow().state_at(1.0)


def test_unconstrained_trajectory_matches_solver():
    s = random_state(SHAPE, 0)
    est = ClosedFormFlow(gamma=0.2, N=3, eta=0.3, s=0.5).fit(s)
    assert est.shape_ == SHAPE
    d = decompose(s.hw, SHAPE)
    sc = schedules.constant(0.3, s=0.5)
    states = est.trajectory([0.0, 2.0, 5.0])
    for t, st in zip([0.0, 2.0, 5.0], states):
        H, W = unconstrained_state(d, SHAPE, sc, t)
        np.testing.assert_allclose(st.H, H, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(st.W, W, rtol=1e-14, atol=1e-15)
    X = est.transform([0.0, 2.0])
    assert X.shape == (2, s.H.size + s.W.size + 4)
    np.testing.assert_allclose(X[0], np.concatenate([s.H.ravel(), s.W.ravel(), s.b]), atol=1e-15)


def test_regularized_trajectory_matches_solver():
    s = random_state(SHAPE, 1)
    est = ClosedFormFlow("regularized", gamma=0.2, N=3, eta=0.2, lambda1=0.05, lambda2=0.1).fit(s)
    d = decompose(s.hw, SHAPE)
    H, W = regularized_state(d, SHAPE, schedules.constant(0.2), 0.05, 0.1, 4.0)
    st = est.state_at(4.0)
    np.testing.assert_allclose(st.H, H, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(st.W, W, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("kwargs,X", [
    ({"regime": "spherical"}, None),
    ({"lambda1": 0.1}, None),
    ({"regime": "regularized", "lambda2": -0.1}, None),
    ({"N": 2}, None),
    ({}, "not a state"),
])
def test_invalid_fit(kwargs, X):
    est = ClosedFormFlow(gamma=0.2, **{"N": 3, **kwargs})
    with pytest.raises((ValueError, TypeError)):
        est.fit(random_state(SHAPE, 2) if X is None else X)
