"""Convergence diagnostics: rate fits, distances to limits, oracle comparisons."""

from dataclasses import dataclass

import numpy as np

from .simulators import normalized_distance

NORM_THRESHOLD = 1e-6
MIN_POINTS = 10


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int


def fit_exponential_rate(times, values, window=None, tail=0.5, floor=None):
    """Least-squares line through (t, log value).

    ``window=(t_lo, t_hi)`` restricts the rows first; then only the latter
    ``tail`` fraction of that range (in time) is used, to skip transients.
    Pass ``tail=1`` to fit the whole window. With ``floor`` set, the window
    ends before the first value at or below it (a round-off floor).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-D arrays of equal length")
    if not 0 < tail <= 1:
        raise ValueError(f"tail must lie in (0, 1], got {tail}")
    if floor is not None:
        below = np.nonzero(~(v > floor))[0]
        if below.size:
            t, v = t[: below[0]], v[: below[0]]
        if t.size < MIN_POINTS:
            raise ValueError(f"fewer than {MIN_POINTS} points above the floor {floor}")
    lo, hi = (t.min(), t.max()) if window is None else window
    sel = (t >= lo) & (t <= hi)
    start = hi - tail * (hi - lo)
    sel &= t >= start
    t, v = t[sel], v[sel]
    if t.size < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points in the fit window, got {t.size}")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("values in the fit window must be positive and finite")
    y = np.log(v)
    A = np.column_stack([t, np.ones_like(t)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # sums at round-off level count as zero, so flat data fits exactly
    noise = t.size * (16 * np.finfo(float).eps * max(1.0, float(np.abs(y).max()))) ** 2
    if ss_tot > noise:
        r2 = 1 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res <= noise else 0.0
    return RateFit(float(slope), float(intercept), float(r2), (float(t[0]), float(t[-1])), int(t.size))


def dist_to_limit(Z_seq, limit_Z):
    """Normalized distance of every element of ``Z_seq`` to ``limit_Z``.

    Elements and the limit are (H, W) pairs or arrays; a Trace with stored
    snapshots is also accepted.
    """
    if hasattr(Z_seq, "snapshots"):
        if Z_seq.snapshots is None:
            raise ValueError("trace has no stored snapshots")
        Z_seq = [s.hw for s in Z_seq.snapshots]
    return np.array([normalized_distance(Z, limit_Z) for Z in Z_seq])


def _flatten(Z):
    if hasattr(Z, "hw"):
        Z = Z.hw
    parts = Z if isinstance(Z, tuple) else (Z,)
    return np.concatenate([np.ravel(x) for x in parts])


def compare_closed_form(trace, solver, sample_times, floor=1e-300):
    """max over sample times of ||Z_sim - Z_cf|| / max(||Z_cf||, floor).

    ``trace`` is a Trace with snapshots (or any object with ``times`` and
    ``snapshots``); ``solver`` maps t to the closed-form state.
    """
    if trace.snapshots is None:
        raise ValueError("trace has no stored snapshots")
    times = np.asarray(trace.times, dtype=float)
    worst = 0.0
    for t in sample_times:
        idx = int(np.argmin(np.abs(times - t)))
        if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} was not recorded in the trace")
        snap = trace.snapshots[idx]
        ref_raw = solver(float(times[idx]))
        if isinstance(ref_raw, np.ndarray) and hasattr(snap, "H"):
            snap = snap.H        # solver describes H only (W held fixed)
        sim, ref = _flatten(snap), _flatten(ref_raw)
        err = np.linalg.norm(sim - ref) / max(np.linalg.norm(ref), floor)
        worst = max(worst, float(err))
    return worst


@dataclass(frozen=True)
class NormGrowthReport:
    classification: str
    fitted_exponent: float
    fit: RateFit


def norm_growth_report(trace, threshold=NORM_THRESHOLD, window=None, tail=0.5):
    fit = fit_exponential_rate(trace.times, trace.metrics["norm_Z"], window, tail)
    if fit.slope > threshold:
        cls = "grows"
    elif fit.slope < -threshold:
        cls = "shrinks"
    else:
        cls = "bounded"
    return NormGrowthReport(cls, fit.slope, fit)
