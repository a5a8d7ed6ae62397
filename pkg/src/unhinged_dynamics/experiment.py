"""Config-driven experiment runner: sweeps, CSV traces, summaries and plots."""

from concurrent.futures import ProcessPoolExecutor
import configparser
import csv
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
import itertools
import json
import os
import re
from types import SimpleNamespace

import numpy as np

from . import schedules
from .analysis import compare_closed_form, fit_exponential_rate, norm_growth_report
from .closed_form import (anchored_state, ntk_state, regularized_limit, regularized_state,
                          unconstrained_limit, unconstrained_state)
from .shapes import ProblemShape, State, random_state
from .simulators import COLUMNS, REGIMES, run, spherical_scalar_run, spherical_scalars
from .subspaces import decompose

SECTION_KEYS = {
    "experiment": {"regime", "seed", "horizon", "dt", "record_stride", "rescale_lr",
                   "closed_form_check", "output_dir", "lambda", "lambda1", "lambda2",
                   "zero_mean_prototypes"},
    "shape": {"p", "C", "N", "gamma"},
    "schedule": {"kind", "eta0", "period", "s"},
    "sweep": {"gamma_list", "lambda", "eta0", "s", "rescale_lr"},
}
ALL_KEYS = set().union(*SECTION_KEYS.values())
SWEEP_ORDER = ("gamma_list", "lambda", "eta0", "s", "rescale_lr")
LAMBDA_STAR = "lambda_star"
DIST_FLOOR = 1e-12          # distances below this are round-off, excluded from fits
ALIGN_FRACTION = 0.1        # "aligned" once dist_to_limit drops below 10% of its start


class ConfigError(ValueError):
    pass


def _real(text, key):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"key {key!r}: expected a real number, got {text!r}") from None


def _int(text, key):
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {text!r}") from None


def _bool(text, key):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected true/false, got {text!r}")


def _lam(text, key):
    return LAMBDA_STAR if text.strip() == LAMBDA_STAR else _real(text, key)


def _list(text):
    items = [x.strip() for x in text.split(",")]
    if not items or any(x == "" for x in items):
        raise ConfigError(f"malformed list {text!r}")
    return items


@dataclass(frozen=True)
class ExperimentConfig:
    regime: str
    p: int = 512
    C: int = 100
    N: int = 10
    gamma: float = 1 / 99
    seed: int = 0
    horizon: int = 10_000
    dt: float = 1.0
    record_stride: int = 10
    kind: str = "constant"
    eta0: tuple = (0.1,)
    period: tuple = ()
    s: float = 1.0
    lam: object = None
    lambda1: object = None
    lambda2: object = None
    rescale_lr: bool = False
    closed_form_check: bool = False
    output_dir: str = "results"
    zero_mean_prototypes: bool = False
    sweep: dict = field(default_factory=dict)

    @property
    def shape(self):
        return ProblemShape(self.p, self.C, self.N, self.gamma)

    def members(self):
        """Expand the sweep grid into RunSpecs in a fixed order."""
        axes = [(k, self.sweep[k]) for k in SWEEP_ORDER if k in self.sweep]
        names = [k for k, _ in axes]
        out = []
        # paired comparisons: the rescale toggle reuses the substream of its partner
        pair_axes = [k for k in names if k != "rescale_lr"]
        pair_index = {}
        for idx, combo in enumerate(itertools.product(*[v for _, v in axes])):
            values = dict(zip(names, combo))
            key = tuple(values[k] for k in pair_axes)
            stream = pair_index.setdefault(key, len(pair_index))
            out.append(self._member(idx, stream, values))
        return out

    def _member(self, idx, stream, values):
        gamma = values.get("gamma_list", self.gamma)
        shape = ProblemShape(self.p, self.C, self.N, gamma)
        eta0 = (values["eta0"],) if "eta0" in values else self.eta0
        s = values.get("s", self.s)
        schedule = schedules.Schedule(self.kind, eta0, self.period, s)
        lam = values.get("lambda", self.lam)

        def resolve(v):
            if v == LAMBDA_STAR:
                return shape.sigma1
            return 0.0 if v is None else float(v)

        l1 = resolve(self.lambda1 if self.lambda1 is not None else lam)
        l2 = resolve(self.lambda2 if self.lambda2 is not None else lam)
        rescale = values.get("rescale_lr", self.rescale_lr)
        label = "_".join(f"{k.replace('_list', '')}={_fmt(v)}" for k, v in values.items()) or "base"
        return RunSpec(idx, stream, re.sub(r"[^A-Za-z0-9_.=+-]", "-", label), self.regime,
                       shape, schedule, l1, l2, resolve(lam), bool(rescale))


def _fmt(v):
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


@dataclass(frozen=True)
class RunSpec:
    index: int
    stream: int
    label: str
    regime: str
    shape: ProblemShape
    schedule: schedules.Schedule
    lambda1: float
    lambda2: float
    lam: float
    rescale: bool


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw, sweep_raw = {}, {}
    for section in parser.sections():
        if section not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in ALL_KEYS:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            if key not in SECTION_KEYS[section]:
                raise ConfigError(f"key {key!r} does not belong in [{section}]")
            (sweep_raw if section == "sweep" else raw)[key] = value
    if parser.defaults():
        raise ConfigError("keys outside a section are not allowed")
    if "regime" not in raw:
        raise ConfigError("missing required key 'regime'")
    regime = raw["regime"].strip()
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}; expected one of {REGIMES}")

    kw = {"regime": regime}
    for key in ("p", "C", "N", "seed", "horizon", "record_stride"):
        if key in raw:
            kw[key] = _int(raw[key], key)
    for key in ("gamma", "dt", "s"):
        if key in raw:
            kw[key] = _real(raw[key], key)
    for key in ("rescale_lr", "closed_form_check", "zero_mean_prototypes"):
        if key in raw:
            kw[key] = _bool(raw[key], key)
    if "output_dir" in raw:
        kw["output_dir"] = raw["output_dir"].strip()
    if "kind" in raw:
        kw["kind"] = raw["kind"].strip()
    if "eta0" in raw:
        kw["eta0"] = tuple(_real(x, "eta0") for x in _list(raw["eta0"]))
    if "period" in raw:
        kw["period"] = tuple(_real(x, "period") for x in _list(raw["period"]))
    if "lambda" in raw:
        kw["lam"] = _lam(raw["lambda"], "lambda")
    for key in ("lambda1", "lambda2"):
        if key in raw:
            kw[key] = _lam(raw[key], key)

    sweep = {}
    parsers = {"gamma_list": _real, "lambda": _lam, "eta0": _real, "s": _real,
               "rescale_lr": _bool}
    for key, value in sweep_raw.items():
        sweep[key] = [parsers[key](x, key) for x in _list(value)]
    kw["sweep"] = sweep

    try:
        cfg = ExperimentConfig(**kw)
        _validate(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _validate(cfg):
    if cfg.horizon < 0:
        raise ConfigError("horizon must be >= 0")
    if cfg.record_stride < 1:
        raise ConfigError("record_stride must be >= 1")
    if not cfg.dt > 0:
        raise ConfigError("dt must be > 0")
    if cfg.regime == "spherical" and not cfg.zero_mean_prototypes:
        raise ConfigError("spherical regime requires zero_mean_prototypes = true")
    if cfg.regime != "spherical" and (cfg.rescale_lr or "rescale_lr" in cfg.sweep):
        raise ConfigError("rescale_lr applies to the spherical regime only")
    lam_keys = [k for k in ("lam", "lambda1", "lambda2") if getattr(cfg, k) is not None]
    if "lambda" in cfg.sweep:
        lam_keys.append("lam")
    if cfg.regime in ("unconstrained", "spherical", "ntk") and lam_keys:
        raise ConfigError(f"regime {cfg.regime!r} takes no lambda")
    if cfg.regime == "anchored" and (cfg.lambda1 is not None or cfg.lambda2 is not None):
        raise ConfigError("anchored regime takes 'lambda', not lambda1/lambda2")
    for k in ("lam", "lambda1", "lambda2"):
        v = getattr(cfg, k)
        if isinstance(v, float) and v < 0:
            raise ConfigError(f"{k} must be >= 0")
    if any(isinstance(v, float) and v < 0 for v in cfg.sweep.get("lambda", [])):
        raise ConfigError("lambda must be >= 0")
    cfg.members()      # builds every shape and schedule, raising on bad values


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_text(name):
    try:
        return resources.files(__package__).joinpath("presets", f"{name}.ini").read_text("utf-8")
    except (FileNotFoundError, OSError):
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None


def preset_names():
    folder = resources.files(__package__).joinpath("presets")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


# --- running ----------------------------------------------------------------

def initial_state(spec, seed, zero_mean):
    rng = np.random.default_rng([seed, spec.stream])
    st = random_state(spec.shape, rng)
    if zero_mean:
        st = State(st.H, st.W - st.W.mean(axis=1, keepdims=True), st.b)
    return st


def ntk_kernel(spec, seed):
    """Random PSD kernel with unit mean eigenvalue, drawn from the run's substream."""
    rng = np.random.default_rng([seed, spec.stream, 1])
    A = rng.normal(size=(spec.shape.p, spec.shape.p))
    K = A @ A.T
    return K * (spec.shape.p / np.trace(K))


def _closed_form_solver(spec, Z0, K):
    shape, sched = spec.shape, spec.schedule
    if spec.regime == "unconstrained":
        d = decompose(Z0.hw, shape)
        return lambda t: unconstrained_state(d, shape, sched, t)
    if spec.regime == "regularized":
        d = decompose(Z0.hw, shape)
        return lambda t: regularized_state(d, shape, sched, spec.lambda1, spec.lambda2, t)
    if spec.regime == "anchored":
        return lambda t: anchored_state(Z0.H, Z0.W, shape, sched, spec.lam, t)
    if spec.regime == "ntk":
        return lambda t: ntk_state(Z0.H, Z0.W, K, shape, sched.zeta(2, t))
    return None


def _spherical_scalar_gap(spec, Z0, snaps, dt):
    """Max deviation between the vector run and the scalar (alpha, beta) recursion."""
    shape, sched = spec.shape, spec.schedule
    steps = [k for k, _ in snaps]
    worst = 0.0
    for col in range(shape.n_samples):
        w = Z0.W[:, col // shape.N]
        rate = dt * sched.eta(1, 0.0)
        a0, b0 = spherical_scalars(Z0.H[:, col], w, rate, shape, spec.rescale)
        _, betas = spherical_scalar_run(a0, b0, sched, steps[-1], spec.rescale, dt)
        for k, st in snaps:
            h = st.H[:, col]
            beta = float(h @ w / (np.linalg.norm(h) * np.linalg.norm(w)))
            worst = max(worst, abs(beta - betas[k]))
    return worst


def run_member(cfg, spec, out_dir):
    shape = spec.shape
    Z0 = initial_state(spec, cfg.seed, cfg.regime == "spherical" or cfg.zero_mean_prototypes)
    params = {"lambda1": spec.lambda1, "lambda2": spec.lambda2, "lambda": spec.lam,
              "rescale": spec.rescale}
    K = None
    if spec.regime == "ntk":
        K = ntk_kernel(spec, cfg.seed)
        params["K"] = K

    n_records = cfg.horizon // cfg.record_stride + 1
    sample_every = max(1, n_records // 10)
    samples = []
    counter = [0]

    def keep(k, t, st):
        if counter[0] % sample_every == 0 or k == cfg.horizon:
            samples.append((k, t, st))
        counter[0] += 1

    trace = run(spec.regime, Z0, shape, spec.schedule, params, cfg.horizon, cfg.record_stride,
                cfg.dt, on_record=keep if cfg.closed_form_check else None)

    csv_path = os.path.join(out_dir, f"{spec.index:02d}_{spec.label}.csv")
    write_csv(trace, csv_path)
    summary = {
        "index": spec.index, "label": spec.label, "regime": spec.regime,
        "gamma": shape.gamma, "eta0": list(spec.schedule.values), "s": spec.schedule.s,
        "lambda1": spec.lambda1, "lambda2": spec.lambda2, "lambda": spec.lam,
        "rescale_lr": spec.rescale, "csv": os.path.basename(csv_path),
        "records": int(trace.times.size), "overflow_step": trace.overflow_step,
        "events": list(trace.events),
    }
    summary.update(_fits(trace))
    if spec.regime == "unconstrained":
        lim = unconstrained_limit(decompose(Z0.hw, shape), shape, spec.schedule.s)
        summary["limit_status"] = lim.status
        summary["predicted_dist_slope_per_unit_g"] = lim.rate_exponent
    if spec.regime == "regularized" and spec.lambda1 == spec.lambda2:
        rl = regularized_limit(decompose(Z0.hw, shape), shape, spec.schedule, spec.lambda1)
        summary["lambda_star"] = rl.lambda_star
        summary["predicted_norm_classification"] = rl.classification
        summary["predicted_omega_per_unit_zeta2"] = rl.omega
    if cfg.closed_form_check and samples:
        solver = _closed_form_solver(spec, Z0, K)
        if solver is not None:
            mini = SimpleNamespace(times=np.array([t for _, t, _ in samples]),
                                   snapshots=[st for _, _, st in samples])
            summary["closed_form_max_rel_error"] = compare_closed_form(mini, solver, mini.times)
        else:
            summary["scalar_recursion_max_gap"] = _spherical_scalar_gap(
                spec, Z0, [(k, st) for k, _, st in samples], cfg.dt)
    return summary


def _fits(trace):
    out = {}
    try:
        nr = norm_growth_report(trace)
        out["norm_classification"] = nr.classification
        out["norm_exponent"] = nr.fitted_exponent
    except ValueError as exc:
        out["norm_classification"] = None
        out["norm_fit_error"] = str(exc)
    dist = trace.metrics["dist_to_limit"]
    try:
        f = fit_exponential_rate(trace.times, dist, floor=DIST_FLOOR)
        out["dist_slope"] = f.slope
        out["dist_r_squared"] = f.r_squared
    except ValueError as exc:
        out["dist_slope"] = None
        out["dist_fit_error"] = str(exc)
    if dist.size and np.isfinite(dist[0]):
        hit = np.nonzero(dist < ALIGN_FRACTION * dist[0])[0]
        out["time_to_alignment"] = float(trace.times[hit[0]]) if hit.size else None
    out["final_dist_to_limit"] = float(dist[-1]) if dist.size and np.isfinite(dist[-1]) else None
    return out


def _fmt_cell(x):
    return repr(float(x)) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def write_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in trace.rows():
            w.writerow([_fmt_cell(x) for x in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def run_experiment(cfg, out_dir=None, svg=False, jobs=1):
    """Run every sweep member, write CSVs and summary.json; returns the summary dict."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    specs = cfg.members()
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_member, [cfg] * len(specs), specs, [out_dir] * len(specs)))
    else:
        results = [run_member(cfg, spec, out_dir) for spec in specs]
    summary = {"regime": cfg.regime, "seed": cfg.seed, "horizon": cfg.horizon, "dt": cfg.dt,
               "record_stride": cfg.record_stride, "p": cfg.p, "C": cfg.C, "N": cfg.N,
               "runs": results}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
    if svg:
        from .plotting import write_svgs
        write_svgs(out_dir, [r["csv"] for r in results], [r["label"] for r in results])
    return summary


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def with_horizon(cfg, horizon):
    return replace(cfg, horizon=horizon)
