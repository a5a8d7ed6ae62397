"""Learning-rate schedules with exact cumulative integrals.

A schedule describes eta2(t); the feature rate is always eta1(t) = s * eta2(t),
so the pair is proportional by construction and zeta1 = s * zeta2.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_positive, check_time

KINDS = ("constant", "cosine_annealing", "piecewise_table")


@dataclass(frozen=True)
class Schedule:
    kind: str
    values: tuple          # (eta,), (eta0,) or per-segment rates
    breakpoints: tuple = ()  # (T,) for cosine, segment boundaries for the table
    s: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        check_positive(self.s, "s")
        vals = tuple(float(v) for v in self.values)
        bps = tuple(float(v) for v in self.breakpoints)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"learning rates must be finite and >= 0, got {vals}")
        if self.kind == "constant" and (len(vals) != 1 or bps):
            raise ValueError("constant schedule takes one rate and no breakpoints")
        if self.kind == "cosine_annealing":
            if len(vals) != 1 or len(bps) != 1 or not bps[0] > 0:
                raise ValueError("cosine schedule takes eta0 and a positive period")
        if self.kind == "piecewise_table":
            if len(vals) != len(bps) + 1:
                raise ValueError("piecewise table needs one more rate than breakpoints")
            if any(b <= 0 for b in bps) or any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
                raise ValueError("breakpoints must be positive and strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "s", float(self.s))

    def _scale(self, which):
        if which == 1:
            return self.s
        if which == 2:
            return 1.0
        raise ValueError(f"which must be 1 or 2, got {which!r}")

    def eta(self, which, t):
        scale = self._scale(which)
        t = check_time(t)
        if self.kind == "constant":
            r = self.values[0]
        elif self.kind == "cosine_annealing":
            eta0, T = self.values[0], self.breakpoints[0]
            r = 0.5 * eta0 * (1 + math.cos(math.pi * t / T)) if t <= T else 0.0
        else:
            r = self.values[int(np.searchsorted(self.breakpoints, t, side="right"))]
        return scale * r

    def zeta(self, which, t):
        scale = self._scale(which)
        t = check_time(t)
        if self.kind == "constant":
            z = self.values[0] * t
        elif self.kind == "cosine_annealing":
            eta0, T = self.values[0], self.breakpoints[0]
            if t <= T:
                z = 0.5 * eta0 * (t + T / math.pi * math.sin(math.pi * t / T))
            else:
                z = 0.5 * eta0 * T
        else:
            z, lo = 0.0, 0.0
            for rate, hi in zip(self.values, self.breakpoints + (math.inf,)):
                if t <= lo:
                    break
                z += rate * (min(t, hi) - lo)
                lo = hi
        return scale * z


def constant(eta, s=1.0):
    return Schedule("constant", (eta,), (), s)


def cosine_annealing(eta0, period, s=1.0):
    return Schedule("cosine_annealing", (eta0,), (period,), s)


def piecewise_table(rates, breakpoints, s=1.0):
    return Schedule("piecewise_table", tuple(rates), tuple(breakpoints), s)


def proportional_pair(sched1, sched2, rtol=1e-12):
    """Combine separate eta1 and eta2 schedules; rejects pairs that are not proportional."""
    if (sched1.kind != sched2.kind or sched1.breakpoints != sched2.breakpoints
            or len(sched1.values) != len(sched2.values)):
        raise ValueError("eta1 and eta2 schedules are not proportional")
    v1 = np.array(sched1.values) * sched1.s
    v2 = np.array(sched2.values) * sched2.s
    if np.any(v2 <= 0):
        raise ValueError("eta2 must be positive to define the ratio s")
    ratios = v1 / v2
    if not np.allclose(ratios, ratios[0], rtol=rtol, atol=0):
        raise ValueError("eta1 and eta2 schedules are not proportional")
    return Schedule(sched2.kind, tuple(v2), sched2.breakpoints, float(ratios[0]))


def eta(schedule, which, t):
    return schedule.eta(which, t)


def zeta(schedule, which, t):
    return schedule.zeta(which, t)


def rescaled_eta(schedule, t, feature_norm, which=1):
    """eta(t) * ||h||, cancelling the 1/||h|| factor of the spherical step."""
    check_positive(feature_norm, "feature_norm")
    return schedule.eta(which, t) * feature_norm
