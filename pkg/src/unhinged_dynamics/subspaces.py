"""The five invariant subspaces of the coupling operator B.

B acts on a pair (H, W) by (H, W) -> (W M, H M^T). Its eigenspaces are

    E1+/-  H = +/- N^{-1/2} W kron 1_N^T,  W 1_C = 0,   sigma = +/- (1+g)/(C sqrt N)
    E2+/-  H = +/- N^{-1/2} h 1_CN^T,      W = h 1_C^T, sigma = +/- (1+g-gC)/(C sqrt N)
    E3     H has zero class means,          W = 0,       sigma = 0

Every projector builds its output from a small parameter (P or h) and expands
it, so membership in the target subspace is exact by construction.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import null_space

from .shapes import apply_m, apply_mt, check_hw

TAGS = ("E1+", "E1-", "E2+", "E2-", "E3")


@dataclass(frozen=True, eq=False)
class Component:
    H: np.ndarray
    W: np.ndarray
    tag: str
    eigenvalue: float

    @property
    def hw(self):
        return self.H, self.W


@dataclass(frozen=True, eq=False)
class Decomposition:
    e1p: Component
    e1m: Component
    e2p: Component
    e2m: Component
    e3: Component

    @property
    def components(self):
        return (self.e1p, self.e1m, self.e2p, self.e2m, self.e3)

    def __getitem__(self, tag):
        return self.components[TAGS.index(tag)]

    def reconstruct(self):
        H = sum(c.H for c in self.components)
        W = sum(c.W for c in self.components)
        return H, W


def _sign(sign):
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign!r}")
    return sign


def eigenvalue_of(tag, shape):
    table = {
        "E1+": shape.sigma1, "E1-": -shape.sigma1,
        "E2+": shape.sigma2, "E2-": -shape.sigma2,
        "E3": 0.0,
    }
    if tag not in table:
        raise ValueError(f"unknown subspace tag {tag!r}")
    return table[tag]


def project_e1(Z, shape, sign):
    sign = _sign(sign)
    H, W = check_hw(Z, shape)
    rootN = math.sqrt(shape.N)
    class_sums = H.reshape(shape.p, shape.C, shape.N).sum(axis=2)
    P = 0.5 * (sign / rootN * class_sums + W)
    P = P - P.mean(axis=1, keepdims=True)
    tag = "E1+" if sign > 0 else "E1-"
    return Component(sign / rootN * np.repeat(P, shape.N, axis=1), P, tag,
                     eigenvalue_of(tag, shape))


def project_e2(Z, shape, sign):
    sign = _sign(sign)
    H, W = check_hw(Z, shape)
    rootN = math.sqrt(shape.N)
    h = (sign / rootN * H.sum(axis=1) + W.sum(axis=1)) / (2 * shape.C)
    tag = "E2+" if sign > 0 else "E2-"
    Hp = np.repeat((sign / rootN) * h[:, None], shape.n_samples, axis=1)
    Wp = np.repeat(h[:, None], shape.C, axis=1)
    return Component(Hp, Wp, tag, eigenvalue_of(tag, shape))


def project_e3(Z, shape):
    H, W = check_hw(Z, shape)
    means = H.reshape(shape.p, shape.C, shape.N).mean(axis=2)
    return Component(H - np.repeat(means, shape.N, axis=1), np.zeros_like(W), "E3", 0.0)


def decompose(Z, shape):
    Z = check_hw(Z, shape)
    return Decomposition(
        project_e1(Z, shape, 1), project_e1(Z, shape, -1),
        project_e2(Z, shape, 1), project_e2(Z, shape, -1),
        project_e3(Z, shape),
    )


def apply_b(Z, shape):
    H, W = check_hw(Z, shape)
    return apply_m(W, shape), apply_mt(H, shape)


def b_eigenbasis(shape):
    """Orthonormal eigenvectors of B as columns of a (CN+C) square matrix.

    Rows 0..CN-1 are the H coordinates, the last C rows the W coordinates.
    Returns (U, sigma) with B U = U diag(sigma).
    """
    C, N = shape.C, shape.N
    n = C * N
    rootN = math.sqrt(N)
    Q = null_space(np.ones((1, C)))           # C x (C-1)
    cols, sig = [], []
    for eps in (1, -1):
        for k in range(C - 1):
            u = np.concatenate([eps / rootN * np.repeat(Q[:, k], N), Q[:, k]]) / math.sqrt(2)
            cols.append(u)
            sig.append(eps * shape.sigma1)
    for eps in (1, -1):
        u = np.concatenate([eps / rootN * np.ones(n), np.ones(C)]) / math.sqrt(2 * C)
        cols.append(u)
        sig.append(eps * shape.sigma2)
    if N > 1:
        R = null_space(np.ones((1, N)))       # N x (N-1)
        for c in range(C):
            for k in range(N - 1):
                u = np.zeros(n + C)
                u[c * N:(c + 1) * N] = R[:, k]
                cols.append(u)
                sig.append(0.0)
    return np.column_stack(cols), np.array(sig)
