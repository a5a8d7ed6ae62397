"""Estimator-style wrapper around the closed-form flows.

``fit`` takes an initial state and stores its eigenspace decomposition;
``trajectory`` and ``transform`` evaluate the flow at requested times.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import schedules
from .closed_form import (regularized_bias, regularized_state, unconstrained_bias,
                          unconstrained_state)
from .shapes import ProblemShape, State, check_state
from .subspaces import decompose

REGIMES = ("unconstrained", "regularized")


class ClosedFormFlow(BaseEstimator):
    """Gradient flow of the layer-peeled unhinged loss under a constant rate.

    Parameters follow the flow: ``eta`` is the classifier rate, ``s`` the
    feature-to-classifier rate ratio, ``lambda1``/``lambda2`` the feature and
    classifier weight decay (regularized regime only). ``N`` is the number of
    samples per class, needed to read the shape off an initial state.
    """

    def __init__(self, regime="unconstrained", gamma=0.1, N=1, eta=0.1, s=1.0,
                 lambda1=0.0, lambda2=0.0):
        self.regime = regime
        self.gamma = gamma
        self.N = N
        self.eta = eta
        self.s = s
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    def _check_params(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime == "unconstrained" and (self.lambda1 or self.lambda2):
            raise ValueError("weight decay needs regime='regularized'")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("weight decay must be >= 0")

    def fit(self, X, y=None):
        """Store the initial state ``X`` (a State) and its decomposition."""
        self._check_params()
        if not isinstance(X, State):
            raise TypeError("X must be a State")
        p, n = np.shape(X.H)
        C = np.shape(X.W)[1] if np.ndim(X.W) == 2 else 0
        if C < 2 or n != C * self.N:
            raise ValueError(f"H has {n} columns; expected C*N = {C}*{self.N}")
        self.shape_ = ProblemShape(int(p), int(C), int(self.N), float(self.gamma))
        self.schedule_ = schedules.constant(self.eta, s=self.s)
        state = check_state(X, self.shape_)
        self.decomposition_ = decompose(state.hw, self.shape_)
        self.b0_ = state.b
        return self

    def state_at(self, t):
        check_is_fitted(self, "decomposition_")
        shape, sc = self.shape_, self.schedule_
        if self.regime == "unconstrained":
            H, W = unconstrained_state(self.decomposition_, shape, sc, t)
            b = unconstrained_bias(self.b0_, shape, sc, t)
        else:
            H, W = regularized_state(self.decomposition_, shape, sc, self.lambda1,
                                     self.lambda2, t)
            b = regularized_bias(self.b0_, shape, sc, self.lambda2, t)
        return State(H, W, b)

    def trajectory(self, times):
        return [self.state_at(float(t)) for t in np.atleast_1d(times)]

    def transform(self, times):
        """Rows are flattened (H, W, b) at each time."""
        return np.stack([np.concatenate([s.H.ravel(), s.W.ravel(), s.b])
                         for s in self.trajectory(times)])
