"""Explicit gradient-descent simulators for every regime.

Each step multiplies the flow's right-hand side by dt * eta(t); H and W are
updated simultaneously from the pre-step values.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from ._validation import check_matrix, check_positive
from .shapes import (State, add_m, apply_m, apply_mt, batch_loss, check_state, nc_metrics,
                     predict)
from .subspaces import decompose
from .closed_form import regularized_limit, unconstrained_limit, _kernel_spectrum

REGIMES = ("unconstrained", "regularized", "anchored", "spherical", "ntk")
COLUMNS = ("t", "loss", "train_accuracy", "norm_Z", "norm_H", "norm_W", "dist_to_limit",
           "within_class_variability", "self_duality", "etf_deviation", "bias_max_over_min")
OVERFLOW_NORM = 1e150


# --- single steps -----------------------------------------------------------

def step_unconstrained(state, shape, schedule, t, dt):
    e1 = dt * schedule.eta(1, t)
    e2 = dt * schedule.eta(2, t)
    H, W, b = state.H, state.W, state.b
    return State(add_m(H, W, e1, shape),
                 W + e2 * apply_mt(H, shape),
                 b + e2 * shape.bias_rate)


def step_regularized(state, shape, schedule, lambda1, lambda2, t, dt):
    e1 = dt * schedule.eta(1, t)
    e2 = dt * schedule.eta(2, t)
    H, W, b = state.H, state.W, state.b
    return State(add_m((1 - e1 * lambda1) * H, W, e1, shape),
                 W + e2 * (apply_mt(H, shape) - lambda2 * W),
                 b + e2 * (shape.bias_rate - lambda2 * b))


def step_anchored(H, W, shape, schedule, lam, t, dt, WM=None):
    e = dt * schedule.eta(1, t)
    if WM is None:
        WM = apply_m(W, shape)
    return H + e * (WM - lam * H)


def step_ntk(state, K, shape, schedule, t, dt):
    """Euler step of H' = K W M, W' = H M^T (rates eta2(t), unit by default)."""
    e = dt * schedule.eta(2, t)
    H, W, b = state.H, state.W, state.b
    return State(H + e * (K @ apply_m(W, shape)),
                 W + e * apply_mt(H, shape),
                 b + e * shape.bias_rate)


def _spherical_increment(H, G, rate, rescale):
    norms = np.linalg.norm(H, axis=0)
    if np.any(norms == 0):
        raise ValueError("spherical step undefined for a zero-norm feature")
    Hn = H / norms
    radial = np.sum(Hn * G, axis=0)
    tangent = G - Hn * radial
    g_norms = np.linalg.norm(G, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = radial / g_norms
    # columns already on the ray of their prototype (cos = +-1) get an exactly
    # zero increment; rounding would otherwise perturb them
    frozen = (g_norms == 0) | (np.abs(cos) >= 1 - 1e-15)
    scale = rate if rescale else rate / norms
    inc = tangent * scale
    inc[:, frozen] = 0.0
    return inc, frozen


def step_spherical(H, W, shape, schedule, t, rescale=False, dt=1.0, WM=None):
    """h <- h + (dt eta(t) / ||h||) (I - h^ h^T) (W M)_col; rescale drops the 1/||h||.

    With centered prototypes (W 1 = 0) the column of W M is (1+g)/(CN) w_c.
    """
    if WM is None:
        WM = apply_m(W, shape)
    inc, frozen = _spherical_increment(H, WM, dt * schedule.eta(1, t), rescale)
    out = H + inc
    out[:, frozen] = H[:, frozen]
    return out


@dataclass(frozen=True)
class SphericalScalars:
    alpha: float
    beta: float
    xi: float = 1.0


def scalar_spherical_step(sc):
    """One step of the (alpha, beta) system that the spherical step reduces to."""
    a, b, xi = sc.alpha, sc.beta, sc.xi
    q = 1 - b * b
    denom = 1 + a * a * q
    return SphericalScalars(xi * a / denom, (b + a * q) / math.sqrt(denom), xi)


def spherical_scalars(h, w, rate, shape, rescale=False):
    """(alpha, beta) of one column: alpha = rate_eff ||w|| / ||h||^2, beta = cos(w, h).

    rate_eff = (1+g) dt eta / (CN), multiplied by ||h|| when the rate is rescaled.
    """
    hn, wn = np.linalg.norm(h), np.linalg.norm(w)
    eff = (1 + shape.gamma) * rate / shape.n_samples
    alpha = eff * wn / (hn if rescale else hn * hn)
    return alpha, float(h @ w / (hn * wn))


def spherical_scalar_run(alpha0, beta0, schedule, steps, rescale=False, dt=1.0):
    """Iterate the scalar system with xi_t = eta(t+1)/eta(t) (times the norm ratio when rescaled)."""
    alphas, betas = [alpha0], [beta0]
    a, b = alpha0, beta0
    for k in range(steps):
        e0 = schedule.eta(1, k * dt)
        e1 = schedule.eta(1, (k + 1) * dt)
        xi = e1 / e0 if e0 > 0 else 0.0
        if rescale:
            xi *= math.sqrt(1 + a * a * (1 - b * b))
        nxt = scalar_spherical_step(SphericalScalars(a, b, xi))
        a, b = nxt.alpha, nxt.beta
        alphas.append(a)
        betas.append(b)
    return np.array(alphas), np.array(betas)


def spherical_precondition(H0, W, shape, schedule, rescale=False, dt=1.0):
    """eta(0)(1+g)/(CN ||h0||) <= 1/||w_c|| for every column (no ||h0|| factor when rescaled)."""
    rate = dt * schedule.eta(1, 0.0) * (1 + shape.gamma) / shape.n_samples
    hn = np.linalg.norm(H0, axis=0)
    wn = np.repeat(np.linalg.norm(W, axis=0), shape.N)
    lhs = rate * wn if rescale else rate * wn / hn
    return bool(np.all(lhs <= 1 + 1e-12))


# --- trace ------------------------------------------------------------------

@dataclass
class Trace:
    regime: str
    times: np.ndarray
    metrics: dict
    final: State
    snapshots: list = None
    overflow_step: int = None
    events: list = field(default_factory=list)

    def column(self, name):
        return self.times if name == "t" else self.metrics[name]

    def rows(self):
        cols = [self.column(c) for c in COLUMNS]
        return list(zip(*cols))


def _parts(Z):
    return Z if isinstance(Z, tuple) else (Z,)


def normalized_distance(Z, L):
    """||Z/||Z|| - L/||L|| || for (H, W) pairs or plain arrays."""
    Z, L = _parts(Z), _parts(L)
    if len(Z) != len(L):
        raise ValueError("arguments have different block structure")
    nz = math.sqrt(sum(np.vdot(x, x) for x in Z))
    nl = math.sqrt(sum(np.vdot(x, x) for x in L))
    if nz == 0 or nl == 0 or not (np.isfinite(nz) and np.isfinite(nl)):
        raise ValueError("normalized distance undefined for a zero-norm or non-finite input")
    sq = 0.0
    for x, y in zip(Z, L):
        d = x / nz - y / nl
        sq += np.vdot(d, d)
    return float(math.sqrt(sq))


def column_normalized_error(H, target):
    """||H^ - T^|| with each column scaled to unit norm."""
    return float(np.linalg.norm(H / np.linalg.norm(H, axis=0) -
                                target / np.linalg.norm(target, axis=0)))


def _default_limit(regime, state, shape, schedule, params):
    if regime == "unconstrained":
        return unconstrained_limit(decompose(state.hw, shape), shape, schedule.s).hw
    if regime == "regularized":
        l1, l2 = params.get("lambda1", 0.0), params.get("lambda2", 0.0)
        d = decompose(state.hw, shape)
        if l1 == l2:
            return regularized_limit(d, shape, schedule, l1).hw
        return d.e1p.hw
    if regime in ("anchored", "spherical"):
        return apply_m(state.W, shape)
    return None


def _metrics_row(regime, state, shape, limit):
    H, W, b = state.H, state.W, state.b
    if regime == "spherical":
        Hn = H / np.linalg.norm(H, axis=0)
        loss = batch_loss(State(Hn, W, b), shape)
    else:
        loss = batch_loss(state, shape)
    acc = float(np.mean(predict(state, shape) == shape.labels()))
    nh, nw = float(np.linalg.norm(H)), float(np.linalg.norm(W))
    dist = math.nan
    if limit is not None:
        try:
            if regime == "spherical":
                dist = column_normalized_error(H, limit)
            elif regime == "anchored":
                dist = normalized_distance(H, limit)
            else:
                dist = normalized_distance(state.hw, limit)
        except (ValueError, FloatingPointError):
            dist = math.nan
    nc = nc_metrics(state, shape)
    bmin = b.min()
    bias_ratio = float(b.max() / bmin) if regime not in ("anchored", "spherical") and bmin != 0 else math.nan
    return (loss, acc, math.hypot(nh, nw), nh, nw, dist, nc.within_class_variability,
            nc.self_duality, nc.etf_deviation, bias_ratio)


def run(sim_kind, initial, shape, schedule, params=None, horizon=0, record_stride=1,
        dt=1.0, limit=None, store_snapshots=False, on_record=None):
    """Simulate ``horizon`` steps and record metrics every ``record_stride`` steps.

    params: lambda1/lambda2 (regularized), lambda (anchored), rescale
    (spherical), K (ntk). ``limit`` overrides the regime's default reference
    for dist_to_limit: an (H, W) pair, or a target for H in the anchored and
    spherical regimes. ``on_record(k, t, state)`` is called at every recorded step.
    """
    if sim_kind not in REGIMES:
        raise ValueError(f"unknown simulator {sim_kind!r}; expected one of {REGIMES}")
    params = dict(params or {})
    horizon = int(horizon)
    record_stride = int(record_stride)
    if horizon < 0 or record_stride < 1:
        raise ValueError("horizon must be >= 0 and record_stride >= 1")
    check_positive(dt, "dt")
    state = check_state(initial, shape)

    l1 = check_positive(params.get("lambda1", 0.0), "lambda1", strict=False)
    l2 = check_positive(params.get("lambda2", 0.0), "lambda2", strict=False)
    lam = check_positive(params.get("lambda", 0.0), "lambda", strict=False)
    rescale = bool(params.get("rescale", False))
    K = None
    if sim_kind == "ntk":
        K = params.get("K", np.eye(shape.p))
        _kernel_spectrum(K, shape.p)
        K = check_matrix(K, "K", shape.p, shape.p)
    WM = None
    events = []
    if sim_kind in ("anchored", "spherical"):
        WM = apply_m(state.W, shape)
    if sim_kind == "spherical":
        w_sum = np.linalg.norm(state.W.sum(axis=1))
        if w_sum > 1e-10 * max(1.0, np.linalg.norm(state.W)):
            raise ValueError("spherical regime requires centered prototypes (W 1_C = 0)")
        if np.any(np.linalg.norm(state.H, axis=0) == 0):
            raise ValueError("spherical regime requires nonzero features")
        precondition = spherical_precondition(state.H, state.W, shape, schedule, rescale, dt)
        if not precondition:
            msg = "spherical rate precondition violated; monotonicity not guaranteed"
            warnings.warn(msg)
            events.append(msg)
        Wcols = np.repeat(state.W, shape.N, axis=1)
        prev_beta = np.sum(state.H * Wcols, axis=0) / (
            np.linalg.norm(state.H, axis=0) * np.linalg.norm(Wcols, axis=0))

    if limit is None:
        limit = _default_limit(sim_kind, state, shape, schedule, params)

    times, rows, snaps = [], [], []

    def record(k, st):
        times.append(k * dt)
        rows.append(_metrics_row(sim_kind, st, shape, limit))
        if store_snapshots:
            snaps.append(st)
        if on_record is not None:
            on_record(k, k * dt, st)

    record(0, state)
    overflow = None
    for k in range(horizon):
        t = k * dt
        if sim_kind == "unconstrained":
            nxt = step_unconstrained(state, shape, schedule, t, dt)
        elif sim_kind == "regularized":
            nxt = step_regularized(state, shape, schedule, l1, l2, t, dt)
        elif sim_kind == "anchored":
            nxt = State(step_anchored(state.H, state.W, shape, schedule, lam, t, dt, WM),
                        state.W, state.b)
        elif sim_kind == "spherical":
            nxt = State(step_spherical(state.H, state.W, shape, schedule, t, rescale, dt, WM),
                        state.W, state.b)
        else:
            nxt = step_ntk(state, K, shape, schedule, t, dt)
        with np.errstate(over="ignore", invalid="ignore"):
            nz = math.hypot(np.linalg.norm(nxt.H), np.linalg.norm(nxt.W))
        if not (np.isfinite(nz) and nz <= OVERFLOW_NORM and np.all(np.isfinite(nxt.b))):
            overflow = k + 1
            events.append(f"overflow at step {k + 1}")
            break
        if sim_kind == "spherical" and precondition:
            beta = np.sum(nxt.H * Wcols, axis=0) / (
                np.linalg.norm(nxt.H, axis=0) * np.linalg.norm(Wcols, axis=0))
            if np.any(beta < prev_beta - 1e-12):
                msg = f"cosine decreased at step {k + 1}"
                warnings.warn(msg)
                events.append(msg)
            prev_beta = beta
        state = nxt
        if (k + 1) % record_stride == 0 or k + 1 == horizon:
            record(k + 1, state)

    data = np.array(rows, dtype=float).reshape(len(rows), len(COLUMNS) - 1)
    metrics = {name: data[:, i] for i, name in enumerate(COLUMNS[1:])}
    return Trace(sim_kind, np.array(times), metrics, state,
                 snaps if store_snapshots else None, overflow, events)
