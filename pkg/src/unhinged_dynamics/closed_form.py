"""Closed-form trajectories of the unhinged-loss gradient flows.

All solvers take the initial pair through its five-way ``Decomposition`` and
scale each component by scalars that depend only on the subspace eigenvalue
and the cumulative rates zeta1(t) = s * zeta2(t).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from ._validation import check_matrix, check_positive, check_time, check_vector
from .shapes import apply_m
from .subspaces import b_eigenbasis


def sinhc(x):
    """sinh(x)/x with the series branch near zero."""
    x = float(x)
    if abs(x) < 1e-4:
        x2 = x * x
        return 1.0 + x2 / 6.0 + x2 * x2 / 120.0
    with np.errstate(over="ignore"):
        return float(np.sinh(x) / x)


def _cosh(x):
    with np.errstate(over="ignore"):
        return float(np.cosh(x))


# --- unconstrained flow -----------------------------------------------------

@dataclass(frozen=True)
class UnconstrainedCoefficients:
    alpha1: tuple   # (alpha1^+, alpha1^-)
    beta1: tuple
    alpha2: tuple
    beta2: tuple
    zeta1: float
    zeta2: float


def _alpha_beta(sigma, g):
    # alpha = sinh(sigma g)/g, beta = cosh(sigma g); alpha -> sigma at g = 0
    x = sigma * g
    return sigma * sinhc(x), _cosh(x)


def unconstrained_coefficients(shape, schedule, t):
    t = check_time(t)
    z1, z2 = schedule.zeta(1, t), schedule.zeta(2, t)
    g = math.sqrt(z1 * z2)
    a1p, b1p = _alpha_beta(shape.sigma1, g)
    a1m, b1m = _alpha_beta(-shape.sigma1, g)
    a2p, b2p = _alpha_beta(shape.sigma2, g)
    a2m, b2m = _alpha_beta(-shape.sigma2, g)
    return UnconstrainedCoefficients((a1p, a1m), (b1p, b1m), (a2p, a2m), (b2p, b2m), z1, z2)


def unconstrained_state(decomp, shape, schedule, t):
    """(H(t), W(t)) of the flow H' = eta1 W M, W' = eta2 H M^T."""
    t = check_time(t)
    z1, z2 = schedule.zeta(1, t), schedule.zeta(2, t)
    g = math.sqrt(z1 * z2)
    H = decomp.e3.H.copy()
    W = decomp.e3.W.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for comp in decomp.components[:4]:
            a, b = _alpha_beta(comp.eigenvalue, g)
            H += (a * z1 + b) * comp.H
            W += (a * z2 + b) * comp.W
    return H, W


def unconstrained_bias(b0, shape, schedule, t):
    b0 = check_vector(b0, "b0", shape.C)
    return b0 + shape.bias_rate * schedule.zeta(2, check_time(t))


def e1_dominated(shape):
    """True when the E1+ direction dominates asymptotically (gamma > 0 and C = 2 or gamma < 2/(C-2))."""
    return shape.gamma > 0 and (shape.C == 2 or shape.gamma < 2 / (shape.C - 2))


@dataclass(frozen=True, eq=False)
class UnconstrainedLimit:
    H: np.ndarray
    W: np.ndarray
    rate_exponent: float       # per unit g(t) = sqrt(zeta1 zeta2)
    e1_dominated: bool

    @property
    def hw(self):
        return self.H, self.W

    def rate_exponent_fn(self, g):
        """Exponent of the residual bound at cumulative rate g."""
        return self.rate_exponent * g

    @property
    def status(self):
        return "converges" if self.e1_dominated else "limit direction not E1-dominated"


def unconstrained_limit(decomp, shape, s):
    """Limit direction of Z(t)/||Z(t)|| and its residual exponent per unit g."""
    s = check_positive(s, "s")
    rs = math.sqrt(s)
    H1p, W1p = decomp.e1p.hw
    H1m, W1m = decomp.e1m.hw
    H = (1 + rs) / 2 * H1p + (1 - rs) / 2 * H1m
    W = (1 + rs) / (2 * rs) * W1p - (1 - rs) / (2 * rs) * W1m
    C, g = shape.C, shape.gamma
    rate = max(-g * C, (C - 2) * g - 2) / (C * math.sqrt(shape.N))
    return UnconstrainedLimit(H, W, rate, e1_dominated(shape))


# --- l2-regularized flow ----------------------------------------------------

@dataclass(frozen=True)
class RegularizedScalars:
    theta1: float
    theta2: float
    a: float
    b: float


def expm_2x2_real(S):
    """exp(S) for a real 2x2 matrix with real eigenvalues.

    Uses exp(S) = e^m [cosh(d) I + sinh(d)/d (S - m I)] with m = tr/2,
    d = half the eigenvalue gap; stays finite when the eigenvalues merge.
    """
    S = np.asarray(S, dtype=float)
    m = 0.5 * (S[0, 0] + S[1, 1])
    D = (S[0, 0] - S[1, 1]) ** 2 + 4 * S[0, 1] * S[1, 0]
    if D < 0:
        raise ValueError("matrix has complex eigenvalues")
    d = 0.5 * math.sqrt(D)
    with np.errstate(over="ignore", invalid="ignore"):
        e1, e2 = np.exp(m - d), np.exp(m + d)
        ch = 0.5 * (e2 + e1)
        sh_over_d = (e2 - e1) / (2 * d) if d > 1e-4 else np.exp(m) * sinhc(d)
        return ch * np.eye(2) + sh_over_d * (S - m * np.eye(2))


def regularized_scalars(sigma, lambda1, lambda2, zeta1, zeta2):
    S = np.array([[-lambda1 * zeta1, sigma * zeta1],
                  [sigma * zeta2, -lambda2 * zeta2]])
    tr = -(lambda1 * zeta1 + lambda2 * zeta2)
    D = (lambda1 * zeta1 - lambda2 * zeta2) ** 2 + 4 * sigma ** 2 * zeta1 * zeta2
    root = math.sqrt(D)
    a, b = expm_2x2_real(S) @ np.ones(2)
    return RegularizedScalars(0.5 * (tr - root), 0.5 * (tr + root), float(a), float(b))


def regularized_state(decomp, shape, schedule, lambda1, lambda2, t):
    """(H(t), W(t)) of H' = eta1 (W M - lambda1 H), W' = eta2 (H M^T - lambda2 W)."""
    lambda1 = check_positive(lambda1, "lambda1", strict=False)
    lambda2 = check_positive(lambda2, "lambda2", strict=False)
    t = check_time(t)
    z1, z2 = schedule.zeta(1, t), schedule.zeta(2, t)
    H = np.zeros_like(decomp.e3.H)
    W = np.zeros_like(decomp.e3.W)
    with np.errstate(over="ignore", invalid="ignore"):
        for comp in decomp.components:
            sc = regularized_scalars(comp.eigenvalue, lambda1, lambda2, z1, z2)
            H += sc.a * comp.H
            W += sc.b * comp.W
    return H, W


def regularized_bias(b0, shape, schedule, lambda2, t, printed_form=False):
    """Bias under b' = eta2 ((1+g-gC)/C - lambda2 b).

    ``printed_form=True`` evaluates the alternative expression
    phi(t) (b0 + k psi(t) 1) with psi(t) = int_0^t zeta2(u) exp(lambda2 zeta2(u)) du.
    It does not solve the ODE and exists only so the discrepancy can be measured.
    """
    b0 = check_vector(b0, "b0", shape.C)
    lambda2 = check_positive(lambda2, "lambda2", strict=False)
    t = check_time(t)
    z2 = schedule.zeta(2, t)
    k = shape.bias_rate
    if printed_form:
        phi = math.exp(-lambda2 * z2)
        psi, _ = integrate.quad(lambda u: schedule.zeta(2, u) * math.exp(lambda2 * schedule.zeta(2, u)),
                                0.0, t, epsabs=1e-14, epsrel=1e-12, limit=200)
        return phi * (b0 + k * psi)
    if lambda2 == 0:
        return unconstrained_bias(b0, shape, schedule, t)
    decay = math.exp(-lambda2 * z2)
    return decay * b0 + k * (-math.expm1(-lambda2 * z2)) / lambda2


def omega1(sigma, lam, s):
    return -(lam * (s + 1) + math.sqrt(lam ** 2 * (s - 1) ** 2 + 4 * s * sigma ** 2)) / 2


def omega2(sigma, lam, s):
    return (math.sqrt(lam ** 2 * (s - 1) ** 2 + 4 * s * sigma ** 2) - lam * (s + 1)) / 2


@dataclass(frozen=True, eq=False)
class RegularizedLimit:
    lambda_star: float
    omega1: float          # at sigma1
    omega2: float          # at sigma1
    pi_h_plus: float
    pi_h_minus: float
    pi_w_plus: float
    pi_w_minus: float
    omega: float           # omega2(sigma1) - omega2(|sigma2|), per unit zeta2
    H: np.ndarray          # direction Z_pi
    W: np.ndarray
    classification: str    # shrinks | converges | diverges

    @property
    def hw(self):
        return self.H, self.W


def regularized_limit(decomp, shape, schedule, lam):
    """Asymptotics of the regularized flow with lambda1 = lambda2 = lam."""
    lam = check_positive(lam, "lambda", strict=False)
    s = schedule.s
    s1, s2 = shape.sigma1, abs(shape.sigma2)
    w1, w2 = omega1(s1, lam, s), omega2(s1, lam, s)
    gap = w2 - w1
    pi_hp = (s * s1 - s * lam - w1) / gap
    pi_hm = (-s * s1 - s * lam - w1) / gap
    pi_wp = (s * lam + w2 + s1) / gap
    pi_wm = (s * lam + w2 - s1) / gap
    H = pi_hp * decomp.e1p.H + pi_hm * decomp.e1m.H
    W = pi_wp * decomp.e1p.W + pi_wm * decomp.e1m.W
    lam_star = s1
    if math.isclose(lam, lam_star, rel_tol=1e-12, abs_tol=0.0):
        cls = "converges"
    elif lam > lam_star:
        cls = "shrinks"
    else:
        cls = "diverges"
    return RegularizedLimit(lam_star, w1, w2, pi_hp, pi_hm, pi_wp, pi_wm,
                            w2 - omega2(s2, lam, s), H, W, cls)


# --- prototype-anchored flow ------------------------------------------------

def anchored_state(H0, W, shape, schedule, lam, t):
    """H(t) for H' = eta (W M - lam H) with W held fixed."""
    H0 = check_matrix(H0, "H0", shape.p, shape.n_samples)
    W = check_matrix(W, "W", shape.p, shape.C)
    lam = check_positive(lam, "lambda", strict=False)
    z = schedule.zeta(1, check_time(t))
    WM = apply_m(W, shape)
    if lam == 0:
        return H0 + z * WM
    return math.exp(-lam * z) * H0 + (-math.expm1(-lam * z) / lam) * WM


# --- NTK-invariant flow -----------------------------------------------------

def _kernel_spectrum(K, p):
    K = check_matrix(K, "K", p, p)
    if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValueError("kernel K must be symmetric")
    kappa, V = np.linalg.eigh(0.5 * (K + K.T))
    if kappa.min() < -1e-10:
        raise ValueError(f"kernel K is not positive semidefinite (eigenvalue {kappa.min():.3e})")
    return np.clip(kappa, 0.0, None), V


def ntk_state(H0, W0, K, shape, t):
    """Solve X' = A X B for X = blockdiag(H, W), A = [[0, K], [I_p, 0]].

    Equivalently H' = K W M and W' = H M^T. In the eigenbasis V of K and the
    structural eigenbasis U of B every (kernel mode, B mode) pair evolves by the
    2x2 flow q' = sigma [[0, kappa], [1, 0]] q, whose exponential is
    [[cosh x, mu sinh x], [sinh x / mu, cosh x]] with mu = sqrt(kappa), x = sigma mu t.
    This is the entrywise exp(lambda_A lambda_B t) solution written so that a
    singular K (mu = 0) needs no inverse.
    """
    H0 = check_matrix(H0, "H0", shape.p, shape.n_samples)
    W0 = check_matrix(W0, "W0", shape.p, shape.C)
    t = check_time(t)
    kappa, V = _kernel_spectrum(K, shape.p)
    U, sigma = b_eigenbasis(shape)
    n = shape.n_samples
    UH, UW = U[:n], U[n:]
    Q1 = V.T @ (H0 @ UH)          # p x (CN+C)
    Q2 = V.T @ (W0 @ UW)
    mu = np.sqrt(kappa)[:, None]
    x = mu * sigma[None, :] * t
    with np.errstate(over="ignore", invalid="ignore"):
        ch = np.cosh(x)
        sh = np.sinh(x)
        small = np.abs(x) < 1e-4
        xs = np.where(small, 1.0, x)
        shc = np.where(small, 1 + x * x / 6, sh / xs)     # sinh(x)/x
        # sinh(x)/mu = sigma t sinhc(x), mu sinh(x) = mu^2 sigma t sinhc(x)
        st = sigma[None, :] * t
        P1 = ch * Q1 + (mu ** 2) * st * shc * Q2
        P2 = st * shc * Q1 + ch * Q2
    H = V @ P1 @ UH.T
    W = V @ P2 @ UW.T
    return H, W
