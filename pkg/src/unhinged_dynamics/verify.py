"""One-shot invariant checks over every module, with a mutation hook."""

import math

import numpy as np
from scipy.integrate import solve_ivp

from . import schedules
from .analysis import fit_exponential_rate
from .closed_form import (anchored_state, ntk_state, regularized_bias, regularized_state,
                          unconstrained_state)
from .shapes import (ProblemShape, State, apply_m, apply_mt, batch_loss, build_coupling,
                     gradients, random_state, unhinged_loss)
from .simulators import (run, spherical_scalar_run, spherical_scalars, step_spherical)
from .subspaces import (Component, Decomposition, apply_b, project_e1, project_e2,
                        project_e3)

SHAPES = [(3, 2, 1), (4, 3, 2), (8, 5, 3), (16, 4, 4)]
MUTATIONS = ("project_e1_sign",)


class _Report:
    def __init__(self):
        self.rows = []

    def check(self, name, value, tol, ok=None):
        value = float(value)
        passed = bool(value <= tol) if ok is None else bool(ok)
        self.rows.append({"check": name, "value": value, "tolerance": tol, "passed": passed})


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _pair_norm(Z):
    return math.sqrt(sum(np.vdot(x, x) for x in Z))


def _mutated_project_e1(Z, shape, sign):
    # sign flipped on the feature term of P; output still lies in E1 but is no longer orthogonal
    H, W = Z
    rootN = math.sqrt(shape.N)
    P = 0.5 * (-sign / rootN * H.reshape(shape.p, shape.C, shape.N).sum(axis=2) + W)
    P = P - P.mean(axis=1, keepdims=True)
    tag = "E1+" if sign > 0 else "E1-"
    return Component(sign / rootN * np.repeat(P, shape.N, axis=1), P, tag,
                     sign * shape.sigma1)


def _decompose_with(Z, shape, p1):
    return Decomposition(p1(Z, shape, 1), p1(Z, shape, -1), project_e2(Z, shape, 1),
                         project_e2(Z, shape, -1), project_e3(Z, shape))


def suite_subspaces(rng, mutation=None):
    r = _Report()
    p1 = _mutated_project_e1 if mutation == "project_e1_sign" else project_e1
    worst_orth = worst_rec = worst_eig = 0.0
    for p, C, N in SHAPES:
        for gamma in (0.01, 1 / (C - 1), 0.5):
            shape = ProblemShape(p, C, N, gamma)
            for _ in range(5):
                Z = random_state(shape, rng).hw
                d = _decompose_with(Z, shape, p1)
                energy = _pair_norm(Z) ** 2
                comps = d.components
                for i in range(5):
                    for j in range(i + 1, 5):
                        ip = np.vdot(comps[i].H, comps[j].H) + np.vdot(comps[i].W, comps[j].W)
                        worst_orth = max(worst_orth, abs(ip) / energy)
                H, W = d.reconstruct()
                worst_rec = max(worst_rec, _pair_norm((H - Z[0], W - Z[1])) / _pair_norm(Z))
                for c in comps:
                    n = _pair_norm(c.hw)
                    if n == 0:
                        continue
                    BH, BW = apply_b(c.hw, shape)
                    err = _pair_norm((BH - c.eigenvalue * c.H, BW - c.eigenvalue * c.W))
                    worst_eig = max(worst_eig, err / (n * max(abs(c.eigenvalue), shape.sigma1)))
    r.check("pairwise orthogonality", worst_orth, 1e-10)
    r.check("reconstruction", worst_rec, 1e-10)
    r.check("eigenvector identity", worst_eig, 1e-10)
    return r.rows


def suite_loss(rng, mutation=None):
    r = _Report()
    worst = 0.0
    for p, C, N in SHAPES:
        shape = ProblemShape(p, C, N, 0.3)
        st = random_state(shape, rng)
        labels = shape.labels()
        per = [unhinged_loss(st.W, st.b, st.H[:, k], labels[k], shape.gamma)
               for k in range(shape.n_samples)]
        worst = max(worst, abs(batch_loss(st, shape) - np.mean(per)) / max(1.0, abs(np.mean(per))))
        M = build_coupling(shape).M
        r.check(f"row sums of M {p, C, N}",
                np.max(np.abs(M.sum(axis=1) - shape.bias_rate)), 1e-14)
        r.check(f"structured W M {p, C, N}", _rel(apply_m(st.W, shape), st.W @ M), 1e-13)
        r.check(f"structured H M^T {p, C, N}", _rel(apply_mt(st.H, shape), st.H @ M.T), 1e-13)
    r.check("batch loss equals mean per-sample loss", worst, 1e-12)
    return r.rows


def suite_gradients(rng, mutation=None, n_states=20, step=1e-6):
    r = _Report()
    worst = 0.0
    shapes = [ProblemShape(*s, 0.3) for s in SHAPES[:3]]
    for i in range(n_states):
        shape = shapes[i % len(shapes)]
        st = random_state(shape, rng)
        gH, gW, gb = gradients(st, shape)
        analytic = np.concatenate([gH.ravel(), gW.ravel(), gb])
        x0 = np.concatenate([st.H.ravel(), st.W.ravel(), st.b])
        nH, nW = st.H.size, st.W.size

        def f(x):
            return batch_loss(State(x[:nH].reshape(st.H.shape), x[nH:nH + nW].reshape(st.W.shape),
                                    x[nH + nW:]), shape)
        fd = np.empty_like(x0)
        for k in range(x0.size):
            e = np.zeros_like(x0)
            e[k] = step
            fd[k] = (f(x0 + e) - f(x0 - e)) / (2 * step)
        worst = max(worst, _rel(fd, analytic))
    r.check("central differences", worst, 1e-6)
    return r.rows


def suite_schedules(rng, mutation=None):
    r = _Report()
    scheds = [schedules.constant(0.1, s=0.5), schedules.cosine_annealing(0.2, 30.0, s=2.0),
              schedules.piecewise_table((0.3, 0.1, 0.05), (5.0, 12.0))]
    worst_anti = worst_ratio = 0.0
    delta = 1e-3
    for sc in scheds:
        for t in np.linspace(0.0, 40.0, 41):
            # skip the table's jump points, where eta is discontinuous
            if sc.kind == "piecewise_table" and any(b - delta <= t <= b for b in sc.breakpoints):
                continue
            bound = 0.2 * math.pi / 30.0 * delta ** 2 / 2 + 1e-15 if sc.kind == "cosine_annealing" else 1e-15
            err = abs(sc.zeta(2, t + delta) - sc.zeta(2, t) - sc.eta(2, t) * delta)
            worst_anti = max(worst_anti, err / bound)
            worst_ratio = max(worst_ratio, abs(sc.zeta(1, t) - sc.s * sc.zeta(2, t)))
    r.check("zeta is the antiderivative (error / bound)", worst_anti, 1.0 + 1e-9)
    r.check("zeta1 = s zeta2", worst_ratio, 1e-14)
    return r.rows


def suite_closed_form(rng, mutation=None):
    from .subspaces import decompose
    r = _Report()
    shape = ProblemShape(8, 5, 3, 0.2)
    st = random_state(shape, rng)
    d = decompose(st.hw, shape)
    sc = schedules.constant(0.3, s=0.7)
    H0, W0 = unconstrained_state(d, shape, sc, 0.0)
    r.check("unconstrained at t=0", _pair_norm((H0 - st.H, W0 - st.W)), 1e-12)
    delta = 1e-4
    worst_flow = worst_semi = 0.0
    for t in (0.5, 3.0, 10.0):
        Ha, Wa = unconstrained_state(d, shape, sc, t)
        Hb, Wb = unconstrained_state(d, shape, sc, t + delta)
        rhs = (sc.eta(1, t) * apply_m(Wa, shape), sc.eta(2, t) * apply_mt(Ha, shape))
        fd = ((Hb - Ha) / delta, (Wb - Wa) / delta)
        worst_flow = max(worst_flow, _pair_norm((fd[0] - rhs[0], fd[1] - rhs[1])) / _pair_norm(rhs))
        # semigroup: restart from the state at t and run another t
        d2 = decompose((Ha, Wa), shape)
        Hc, Wc = unconstrained_state(d2, shape, sc, t)
        He, We = unconstrained_state(d, shape, sc, 2 * t)
        worst_semi = max(worst_semi, _pair_norm((Hc - He, Wc - We)) / _pair_norm((He, We)))
    r.check("unconstrained flow consistency", worst_flow, 1e-2)
    r.check("unconstrained semigroup", worst_semi, 1e-9)
    l1, l2 = 0.05, 0.02
    worst = 0.0
    for t in (0.5, 3.0, 10.0):
        Ha, Wa = regularized_state(d, shape, sc, l1, l2, t)
        Hb, Wb = regularized_state(d, shape, sc, l1, l2, t + delta)
        rhs = (sc.eta(1, t) * (apply_m(Wa, shape) - l1 * Ha),
               sc.eta(2, t) * (apply_mt(Ha, shape) - l2 * Wa))
        fd = ((Hb - Ha) / delta, (Wb - Wa) / delta)
        worst = max(worst, _pair_norm((fd[0] - rhs[0], fd[1] - rhs[1])) / _pair_norm(rhs))
    r.check("regularized flow consistency", worst, 1e-2)
    worst = 0.0
    for t in (0.0, 2.0, 7.0):
        Hr, Wr = regularized_state(d, shape, sc, 0.0, 0.0, t)
        Hu, Wu = unconstrained_state(d, shape, sc, t)
        worst = max(worst, _pair_norm((Hr - Hu, Wr - Wu)) / _pair_norm((Hu, Wu)))
    r.check("regularized at lambda=0 equals unconstrained", worst, 1e-10)
    worst = 0.0
    for t in (0.5, 4.0):
        A = anchored_state(st.H, st.W, shape, sc, 0.1, t)
        B = anchored_state(st.H, st.W, shape, sc, 0.1, t + delta)
        rhs = sc.eta(1, t) * (apply_m(st.W, shape) - 0.1 * A)
        worst = max(worst, _rel((B - A) / delta, rhs))
    r.check("anchored flow consistency", worst, 1e-2)
    return r.rows


def suite_simulators(rng, mutation=None):
    from .analysis import compare_closed_form
    from .subspaces import decompose
    r = _Report()
    shape = ProblemShape(8, 5, 3, 0.1)
    st = random_state(shape, rng)
    d = decompose(st.hw, shape)
    sc = schedules.constant(0.1)
    errs = []
    for dt in (1e-2, 5e-3):
        tr = run("unconstrained", st, shape, sc, horizon=int(round(5 / dt)),
                 record_stride=int(round(1 / dt)), dt=dt, store_snapshots=True)
        errs.append(compare_closed_form(tr, lambda t: unconstrained_state(d, shape, sc, t),
                                        np.arange(6.0)))
    r.check("Euler vs closed form", errs[0], 1e-2)
    ratio = errs[0] / errs[1]
    r.check("Euler first order (error ratio)", ratio, 2.2, ok=1.8 <= ratio <= 2.2)
    return r.rows


def suite_spherical(rng, mutation=None):
    r = _Report()
    shape = ProblemShape(6, 3, 2, 0.5)
    W = rng.normal(size=(6, 3))
    W -= W.mean(axis=1, keepdims=True)
    H = rng.normal(size=(6, 6))
    H[:, 1] = -2.0 * W[:, 0]                 # antipodal column
    sc = schedules.constant(1.0)
    H0 = H.copy()
    for k in range(50):
        H = step_spherical(H, W, shape, sc, float(k))
    r.check("antipodal column frozen", 0.0 if np.array_equal(H[:, 1], H0[:, 1]) else 1.0, 0.0)
    a0, b0 = spherical_scalars(H0[:, 0], W[:, 0], 1.0, shape)
    _, betas = spherical_scalar_run(a0, b0, sc, 50)
    w = W[:, 0]
    beta_vec = float(H[:, 0] @ w / (np.linalg.norm(H[:, 0]) * np.linalg.norm(w)))
    r.check("scalar recursion reproduces the vector run", abs(beta_vec - betas[-1]), 1e-12)
    return r.rows


def suite_ntk(rng, mutation=None):
    from .subspaces import decompose
    r = _Report()
    shape = ProblemShape(4, 3, 2, 0.5)
    st = random_state(shape, rng)
    d = decompose(st.hw, shape)
    worst = 0.0
    for t in np.linspace(0, 5, 6):
        H, W = ntk_state(st.H, st.W, np.eye(4), shape, t)
        Hu, Wu = unconstrained_state(d, shape, schedules.constant(1.0), t)
        worst = max(worst, _pair_norm((H - Hu, W - Wu)) / _pair_norm((Hu, Wu)))
    r.check("K = I equals unit-rate unconstrained flow", worst, 1e-8)
    return r.rows


def suite_bias(rng, mutation=None):
    r = _Report()
    shape = ProblemShape(4, 3, 2, 0.2)
    sc = schedules.cosine_annealing(0.3, 20.0)
    b0 = rng.normal(size=3)
    lam = 0.7
    sol = solve_ivp(lambda t, b: sc.eta(2, t) * (shape.bias_rate - lam * b), (0, 25), b0,
                    rtol=1e-12, atol=1e-14, dense_output=True)
    worst = max(np.max(np.abs(regularized_bias(b0, shape, sc, lam, t) - sol.sol(t)))
                for t in (1.0, 10.0, 25.0))
    r.check("regularized bias vs ODE integration", worst, 1e-8)
    return r.rows


def suite_analysis(rng, mutation=None):
    r = _Report()
    t = np.linspace(0, 10, 101)
    f = fit_exponential_rate(t, np.exp(-0.5 * t))
    r.check("exact exponential slope", abs(f.slope + 0.5), 1e-10)
    r.check("exact exponential r^2", abs(1 - f.r_squared), 1e-10)
    return r.rows


SUITES = {
    "loss": suite_loss,
    "gradients": suite_gradients,
    "subspaces": suite_subspaces,
    "schedules": suite_schedules,
    "closed_form": suite_closed_form,
    "simulators": suite_simulators,
    "spherical": suite_spherical,
    "ntk": suite_ntk,
    "bias": suite_bias,
    "analysis": suite_analysis,
}


def verify(suite=None, seed=0, mutation=None):
    """Run one suite (or all) and return a machine-readable report."""
    if suite is not None and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; available: {', '.join(SUITES)}")
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; available: {', '.join(MUTATIONS)}")
    names = [suite] if suite else list(SUITES)
    report = {"seed": seed, "mutation": mutation, "suites": {}}
    for name in names:
        rng = np.random.default_rng([seed, names.index(name)])
        report["suites"][name] = SUITES[name](rng, mutation)
    report["passed"] = all(row["passed"] for rows in report["suites"].values() for row in rows)
    return report
