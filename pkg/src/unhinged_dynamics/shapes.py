"""Layer-peeled problem instances, the unhinged loss and collapse metrics.

Internal layout of the feature matrix H is class-major: column ``c*N + i``
holds sample ``i`` of class ``c``, so the label matrix is ``I_C kron 1_N^T``.
``State.from_sample_major`` converts from the interleaved listing
``h_{1,1}, ..., h_{1,C}, h_{2,1}, ...`` where column ``k`` has label ``k % C``.
Class indices are 0-based throughout.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import null_space

from ._validation import check_matrix, check_vector


@dataclass(frozen=True)
class ProblemShape:
    p: int
    C: int
    N: int
    gamma: float

    def __post_init__(self):
        for name in ("p", "C", "N"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.C < 2:
            raise ValueError(f"C must be >= 2, got {self.C}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        # gamma = 0 is admitted: the reference sweeps include it and every formula stays finite
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    @property
    def n_samples(self):
        return self.C * self.N

    @property
    def sigma1(self):
        return (1 + self.gamma) / (self.C * math.sqrt(self.N))

    @property
    def drift(self):
        """1 + gamma - gamma*C; zero when gamma rounds to 1/(C-1)."""
        d = 1 - self.gamma * (self.C - 1)
        return 0.0 if abs(d) <= 4 * np.finfo(float).eps else d

    @property
    def sigma2(self):
        return self.drift / (self.C * math.sqrt(self.N))

    @property
    def bias_rate(self):
        """(1 + gamma - gamma*C) / C, the drift of every bias entry per unit zeta2."""
        return self.drift / self.C

    def labels(self):
        return np.repeat(np.arange(self.C), self.N)


@dataclass(frozen=True, eq=False)
class State:
    H: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @property
    def hw(self):
        return self.H, self.W

    def validated(self, shape):
        return check_state(self, shape)

    @classmethod
    def from_sample_major(cls, H, W, b, shape):
        H = check_matrix(H, "H", shape.p, shape.n_samples)
        Hc = H.reshape(shape.p, shape.N, shape.C).transpose(0, 2, 1).reshape(shape.p, -1)
        return check_state(cls(Hc, W, b), shape)

    def to_sample_major(self, shape):
        p, C, N = shape.p, shape.C, shape.N
        return self.H.reshape(p, C, N).transpose(0, 2, 1).reshape(p, C * N)


def check_state(state, shape):
    H = check_matrix(state.H, "H", shape.p, shape.n_samples)
    W = check_matrix(state.W, "W", shape.p, shape.C)
    b = check_vector(state.b, "b", shape.C)
    return State(H, W, b)


def check_hw(Z, shape):
    H, W = Z
    return (check_matrix(H, "H", shape.p, shape.n_samples),
            check_matrix(W, "W", shape.p, shape.C))


def random_state(shape, rng, scale=None):
    """Gaussian entries with standard deviation 1/sqrt(p) unless ``scale`` is given."""
    rng = np.random.default_rng(rng)
    sd = 1 / math.sqrt(shape.p) if scale is None else scale
    H = rng.normal(0.0, sd, (shape.p, shape.n_samples))
    W = rng.normal(0.0, sd, (shape.p, shape.C))
    b = rng.normal(0.0, sd, shape.C)
    return State(H, W, b)


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    M: np.ndarray
    Y: np.ndarray


def build_coupling(shape):
    C, N, g = shape.C, shape.N, shape.gamma
    labels = np.kron(np.eye(C), np.ones((1, N)))
    M = ((1 + g) * labels - g * np.ones((C, C * N))) / (C * N)
    return CouplingMatrix(M, -M)


# Structured products with M; these never form the C x CN matrix.
# W M = ((1+g) W - g (W 1) 1^T) kron 1_N^T / CN, so it is a p x C matrix
# repeated N times per class.

def m_core(W, shape):
    """The p x C matrix P with W M = P kron 1_N^T."""
    C, N, g = shape.C, shape.N, shape.gamma
    return ((1 + g) * W - g * W.sum(axis=1, keepdims=True)) / (C * N)


def apply_m(W, shape):
    """W @ M for a p x C matrix W."""
    return np.repeat(m_core(W, shape), shape.N, axis=1)


def add_m(H, W, scale, shape):
    """H + scale * W @ M without forming W @ M."""
    return H + np.repeat(m_core(W, shape) * scale, shape.N, axis=1)


def class_sums(H, shape):
    return (H.reshape(-1, shape.N) @ np.ones(shape.N)).reshape(H.shape[0], shape.C)


def apply_mt(H, shape):
    """H @ M^T for a p x CN matrix H."""
    C, N, g = shape.C, shape.N, shape.gamma
    sums = class_sums(H, shape)
    out = (1 + g) * sums - g * sums.sum(axis=1, keepdims=True)
    return out / (C * N)


def class_means(H, shape):
    return class_sums(H, shape) / shape.N


def unhinged_loss(W, b, h, y, gamma):
    """-w_y.h - b_y + gamma * sum_{j != y} (w_j.h + b_j) for one sample."""
    W = np.asarray(W, dtype=float)
    W = check_matrix(W[None, :] if W.ndim == 1 else W, "W")   # 1-D W means p = 1
    C = W.shape[1]
    b = check_vector(np.atleast_1d(np.asarray(b, float)) * np.ones(C), "b", C)
    h = check_vector(np.atleast_1d(np.asarray(h, float)), "h", W.shape[0])
    if not 0 <= y < C:
        raise ValueError(f"label {y} outside 0..{C - 1}")
    logits = W.T @ h + b
    return float(-logits[y] + gamma * (logits.sum() - logits[y]))


def batch_loss(state, shape):
    """Tr(Y^T W^T H) + ((gamma*C - gamma - 1)/C) 1^T b, the mean per-sample loss."""
    state = check_state(state, shape)
    data = -np.vdot(m_core(state.W, shape), class_sums(state.H, shape))
    return float(data - shape.bias_rate * state.b.sum())


def gradients(state, shape):
    state = check_state(state, shape)
    gH = -apply_m(state.W, shape)
    gW = -apply_mt(state.H, shape)
    gb = np.full(shape.C, -shape.bias_rate)
    return gH, gW, gb


def predict(state, shape):
    """Argmax of w_c.h + b_c per column; ties go to the smallest class index."""
    logits = state.W.T @ state.H + state.b[:, None]
    return np.argmax(logits, axis=0)


def train_accuracy(state, shape):
    state = check_state(state, shape)
    return float(np.mean(predict(state, shape) == shape.labels()))


@dataclass(frozen=True)
class NcReport:
    within_class_variability: float
    self_duality: float
    etf_deviation: float
    norm_spread: float
    degenerate: bool = False


def etf_gram(C):
    return (C / (C - 1)) * np.eye(C) - np.ones((C, C)) / (C - 1)


def nc_metrics(state, shape):
    H, W = state.H, state.W
    C = shape.C
    mu = class_means(H, shape)
    n = shape.n_samples
    energy = np.vdot(H, H) / n
    dev = H.reshape(H.shape[0], C, shape.N) - mu[:, :, None]
    spread = np.vdot(dev, dev) / n
    wcv = float(spread / energy) if energy > 0 else 0.0

    degenerate = False
    w_norms = np.linalg.norm(W, axis=0)
    mu_norms = np.linalg.norm(mu, axis=0)
    if np.any(mu_norms == 0) or np.any(w_norms == 0):
        degenerate = True
        self_duality = math.nan
    else:
        cos = np.sum(mu * W, axis=0) / (mu_norms * w_norms)
        self_duality = float(np.mean(cos))
    if np.any(w_norms == 0):
        etf_dev = math.nan
        norm_spread = math.nan
    else:
        Wn = W / w_norms
        etf_dev = float(np.linalg.norm(Wn.T @ Wn - etf_gram(C)))
        norm_spread = float(w_norms.max() / w_norms.min())
    return NcReport(wcv, self_duality, etf_dev, norm_spread, degenerate)


def loss_lower_bound(E1, E2, gamma):
    """Global lower bound -(1 + gamma) E1 E2 under ||w_c|| <= E1, ||h|| <= E2."""
    if E1 <= 0 or E2 <= 0 or gamma <= 0:
        raise ValueError("E1, E2 and gamma must be positive")
    return -(1 + gamma) * E1 * E2


def etf_prototypes(p, C, norm=1.0, rng=None):
    """p x C simplex ETF with column norm ``norm``; needs p >= C - 1.

    With ``rng`` the frame is rotated by a random orthogonal map of R^p.
    """
    if p < C - 1:
        raise ValueError(f"a simplex ETF with C={C} needs p >= {C - 1}, got p={p}")
    Q = null_space(np.ones((1, C)))          # C x (C-1), orthonormal, Q^T 1 = 0
    W = np.zeros((p, C))
    W[: C - 1] = math.sqrt(C / (C - 1)) * Q.T
    if rng is not None:
        rng = np.random.default_rng(rng)
        R, _ = np.linalg.qr(rng.normal(size=(p, p)))
        W = R @ W
    return norm * W


def etf_optimal_state(shape, E1=1.0, E2=1.0, rng=None):
    """Prototypes forming an ETF of norm E1 with H = (E2/E1) W kron 1_N^T, b = 0."""
    W = etf_prototypes(shape.p, shape.C, E1, rng)
    H = (E2 / E1) * np.repeat(W, shape.N, axis=1)
    return State(H, W, np.zeros(shape.C))
