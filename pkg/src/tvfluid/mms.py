"""Manufactured solutions for the periodic solver.

A smooth exact solution is prescribed; the residual of the continuous
equations at that solution becomes a source term that the solver adds to its
right-hand sides.  The discrete error at the final time then measures the
order of the spatial scheme alone.

Spatial derivatives in the residual use fourth-order central differences on
a grid three times finer than the solver grid, whose points 3i+1 coincide
with the solver's cell centres.  Time derivatives are analytic (chain rule
for the internal energy).
"""

import math
from collections import OrderedDict
from functools import lru_cache
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import solver as slv
from . import tensor2 as t2
from .constitutive import Regime, elastic_energy_f, internal_energy_e
from .grid import Grid

TWO_PI = 2.0 * np.pi
S_DIR = np.array([[1.0, 1.0], [1.0, -1.0]]) / 2.0  # symmetric, unit Frobenius norm


@dataclass(frozen=True)
class ManufacturedCase:
    a_v: float = 0.1
    a_theta: float = 0.3
    a_F: float = 0.2
    k: int = 1
    regime: Regime = Regime.P1

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not 0.0 <= self.a_F < 0.3:
            raise ValueError("a_F must lie in [0, 0.3) to keep det F > 0")
        if not 0.0 <= self.a_theta < 0.5:
            raise ValueError("a_theta must lie in [0, 0.5) to keep theta > 0.5")
        if self.a_v < 0:
            raise ValueError("a_v must be nonnegative")
        if self.k < 1:
            raise ValueError("k must be a positive integer")

    @property
    def is_zero(self):
        return self.a_v == 0 and self.a_theta == 0 and self.a_F == 0


@lru_cache(maxsize=8)
def _patterns(case, n_fine):
    """Time-independent spatial factors of the exact solution on an n_fine grid."""
    c = (np.arange(n_fine) + 0.5) / n_fine
    x, y = np.meshgrid(c, c, indexing="ij")
    return _patterns_at(case, x, y)


def _patterns_at(case, x, y):
    X, Y = TWO_PI * case.k * x, TWO_PI * case.k * y
    w = TWO_PI * case.k * case.a_v
    V = np.stack([w * np.sin(X) * np.cos(Y), -w * np.cos(X) * np.sin(Y)])
    phi = case.a_F * np.sin(X) * np.sin(Y)
    return V, S_DIR[:, :, None, None] * phi, case.a_theta * np.cos(X)


def _fields(case, t, pats, restrict=None):
    """Exact v, F, theta and their time derivatives from the spatial factors.

    ``restrict`` (if given) is applied to the factors of the time derivatives,
    which are only ever needed pointwise.
    """
    V, Fpat, tpat = pats
    r = restrict if restrict is not None else (lambda a: a)
    ct, st = math.cos(t), math.sin(t)
    F = Fpat * ct
    F[0, 0] += 1.0
    F[1, 1] += 1.0
    return {
        "v": V * ct,
        "v_t": -r(V) * st,
        "F": F,
        "F_t": -r(Fpat) * st,
        "theta": 1.0 + tpat * ct,
        "theta_t": -r(tpat) * st,
    }


def exact_solution(case, grid, t):
    """Exact fields sampled at the cell centres of ``grid`` (v not projected)."""
    if not grid.periodic:
        raise ValueError("manufactured solutions are periodic only")
    x, y = grid.centers()
    f = _fields(case, t, _patterns_at(case, x, y))
    return slv.make_state(grid, f["v"], f["F"], f["theta"], t=t)


_D4 = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))


def _d4(a, axis, h):
    """Fourth-order central first derivative on a periodic grid."""
    return (
        -np.roll(a, -2, axis) + 8.0 * np.roll(a, -1, axis) - 8.0 * np.roll(a, 1, axis) + np.roll(a, 2, axis)
    ) / (12.0 * h)


class _Restrict:
    """Evaluation at the fine points that coincide with the solver's cell centres."""

    def __init__(self, n_fine, oversample):
        self.mid, self.step = oversample // 2, oversample
        self.idx = self.mid + oversample * np.arange(n_fine // oversample)
        self.shifted = [((self.idx + off) % n_fine, c) for off, c in _D4]

    def __call__(self, a):
        return a[..., self.mid::self.step, self.mid::self.step]

    def d4(self, a, axis, h):
        """``_d4(a, axis, h)`` evaluated only at the restricted points."""
        out = 0.0
        if axis == -2:
            sub = a[..., self.mid::self.step]
            for rows, c in self.shifted:
                out = out + c * sub[..., rows, :]
        else:
            sub = a[..., self.mid::self.step, :]
            for cols, c in self.shifted:
                out = out + c * sub[..., cols]
        return out / (12.0 * h)

    def div(self, comp_x, comp_y, h):
        return self.d4(comp_x, -2, h) + self.d4(comp_y, -1, h)


def manufactured_sources(model, case, grid, t, epsilon, path=None, oversample=3):
    """Sources ``(s_v, s_F, s_q)`` on ``grid`` making the exact solution solve the system.

    ``s_q`` belongs to the heat variable the solver evolves: theta on the
    direct path, the internal energy e otherwise.
    """
    if oversample % 2 != 1:
        raise ValueError("oversample must be odd so fine points hit the cell centres")
    if path is None:
        path = "theta" if model.regime is Regime.P1 else "energy"
    nf = oversample * grid.n
    hf = 1.0 / nf
    R = _Restrict(nf, oversample)
    f = _fields(case, t, _patterns(case, nf), R)
    v, F, th = f["v"], f["F"], f["theta"]

    # full fine-grid quantities that are differentiated once more
    L = np.stack([np.stack([_d4(v[a], -2, hf), _d4(v[a], -1, hf)]) for a in range(2)])
    D = 0.5 * (L + L.transpose(1, 0, 2, 3))
    Barr = np.einsum("ac...,bc...->ab...", F, F)
    nu, kappa, g = model.nu(th), model.kappa(th), model.g(th)
    sigma = 2.0 * nu * D + 2.0 * g * Barr

    # everything below lives on the solver grid
    vr, Fr, thr, Lr, Br = R(v), R(F), R(th), R(L), R(Barr)
    sigr, Dr = R(sigma), R(D)
    deltar, gr = model.delta(thr), R(g)
    s_v = np.empty_like(vr)
    for a in range(2):
        conv = R.div(v[a] * v[0], v[a] * v[1], hf)
        s_v[a] = f["v_t"][a] + conv - R.div(sigma[a, 0], sigma[a, 1], hf)

    BF = np.einsum("ab...,bc...->ac...", Br, Fr)
    LF = np.einsum("ab...,bc...->ac...", Lr, Fr)
    s_F = np.empty_like(Fr)
    for a in range(2):
        for b in range(2):
            adv = R.div(F[a, b] * v[0], F[a, b] * v[1], hf)
            lap = R.div(_d4(F[a, b], -2, hf), _d4(F[a, b], -1, hf), hf)
            s_F[a, b] = (f["F_t"][a, b] + adv - LF[a, b] + 0.5 * deltar * (BF[a, b] - Fr[a, b])
                         - epsilon * lap)

    conduction = R.div(kappa * _d4(th, -2, hf), kappa * _d4(th, -1, hf), hf)
    stress_power = np.sum(sigr * Lr, axis=(0, 1))
    theta_t = f["theta_t"]
    if path == "theta":
        if model.regime is Regime.P1:
            bmi = np.sum((Br - np.eye(2)[:, :, None, None]) ** 2, axis=(0, 1))
            production = 2.0 * R(nu) * np.sum(Dr * Dr, axis=(0, 1)) + gr * deltar * bmi
        else:
            production = stress_power
        s_q = theta_t + R.div(th * v[0], th * v[1], hf) - (conduction + production) / model.c_v
    else:
        B = t2.SymMat2(Barr[0, 0], Barr[0, 1], Barr[1, 1])
        e = internal_energy_e(model, th, B)
        Bm = t2.SymMat2(Br[0, 0], Br[0, 1], Br[1, 1])
        fB = elastic_energy_f(Bm)
        finvt = t2.inv_transpose(t2.Mat2.from_array(Fr))
        wF = 2.0 * (Fr - np.array([[finvt.a11, finvt.a12], [finvt.a21, finvt.a22]]))
        f_t = np.sum(wF * f["F_t"], axis=(0, 1))
        dg, d2g = model.g.d1(thr), model.g.d2(thr)
        e_t = (model.c_v - thr * d2g * fB) * theta_t + (gr - thr * dg) * f_t
        s_q = e_t + R.div(e * v[0], e * v[1], hf) - conduction - stress_power
    return s_v, s_F, s_q


class SourceCache:
    """Callable ``forcing(t)`` for the solver, memoising the last few times."""

    def __init__(self, model, case, grid, epsilon, path=None, size=4):
        self.model, self.case, self.grid = model, case, grid
        self.epsilon, self.path, self.size = epsilon, path, size
        self._store = OrderedDict()

    def __call__(self, t):
        if t in self._store:
            self._store.move_to_end(t)
            return self._store[t]
        val = manufactured_sources(self.model, self.case, self.grid, t, self.epsilon, self.path)
        self._store[t] = val
        if len(self._store) > self.size:
            self._store.popitem(last=False)
        return val


def l2_error(grid, a, b):
    diff = np.asarray(a) - np.asarray(b)
    if diff.ndim > 2:
        diff = np.sqrt(np.sum(diff.reshape(-1, grid.n, grid.n) ** 2, axis=0))
    return math.sqrt(grid.integrate(diff**2))


def _order(e_coarse, e_fine):
    if e_fine == 0.0:
        return math.inf
    if e_coarse == 0.0:
        return -math.inf
    return math.log2(e_coarse / e_fine)


@dataclass
class StudyRow:
    n: int
    err_v: float
    err_theta: float
    err_F: float
    order_v: float = math.nan
    order_theta: float = math.nan
    order_F: float = math.nan
    steps: int = 0


@dataclass
class StudyReport:
    rows: List[StudyRow] = field(default_factory=list)

    def orders(self, name):
        return [getattr(r, "order_" + name) for r in self.rows[1:]]

    def within(self, name, lo, hi=math.inf):
        """True when every observed order lies in [lo, hi] (exact runs count)."""
        vals = self.orders(name)
        return all(v == math.inf or lo <= v <= hi for v in vals)

    def csv_lines(self):
        def fmt(v):
            if isinstance(v, float) and math.isinf(v):
                return "exact" if v > 0 else "-inf"
            return "" if isinstance(v, float) and math.isnan(v) else repr(v)

        out = ["n,err_v,err_theta,err_F,order_v,order_theta,order_F"]
        for r in self.rows:
            vals = [r.n, r.err_v, r.err_theta, r.err_F, r.order_v, r.order_theta, r.order_F]
            out.append(",".join(fmt(v) for v in vals))
        return out


def mms_dt(model, case, grid, epsilon, safety=0.4):
    """Step proportional to h^2 from the diffusive stability branch.

    Material coefficients are sampled over the temperature range of the
    exact solution; the step is then shortened if the advective branch binds.
    """
    th = np.linspace(1.0 - case.a_theta, 1.0 + case.a_theta, 65)
    diff = max(float(np.max(model.nu(th))), float(np.max(model.kappa(th))) / model.c_v, epsilon)
    dt = safety * grid.h**2 / (4.0 * diff)
    vmax = TWO_PI * case.k * case.a_v
    return min(dt, safety * grid.h / (vmax + 1e-8))


def run_case(model, case, n, T, epsilon=1e-3, path=None, projection_tol=1e-12, safety=0.4):
    """Solve one manufactured case on an n x n grid; returns (state, exact, steps)."""
    grid = Grid(n)
    state = exact_solution(case, grid, 0.0)
    state.v, _ = grid.project_div_free(state.v, projection_tol)
    dt = mms_dt(model, case, grid, epsilon, safety)
    steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / steps
    config = slv.SolverConfig(
        epsilon=epsilon, dt_policy=slv.FixedDt(dt), projection_tol=projection_tol, T=T,
        temperature_path=path or "auto",
    )
    forcing = None if case.is_zero else SourceCache(model, case, grid, epsilon, slv.temperature_path(model, config))
    for _ in range(steps):
        state = slv.step(model, config, state, forcing, dt)
    return state, exact_solution(case, grid, state.t), steps


def convergence_study(model, case, grids, T, epsilon=1e-3, path=None):
    """Errors at time T on each grid and successive log2 ratios."""
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least three grids")
    if model.regime is not case.regime:
        raise ValueError("material regime and case regime differ")
    report = StudyReport()
    for n in grids:
        state, exact, steps = run_case(model, case, n, T, epsilon, path)
        g = state.grid
        row = StudyRow(
            n,
            l2_error(g, state.v, exact.v),
            l2_error(g, state.theta, exact.theta),
            l2_error(g, state.F, exact.F),
            steps=steps,
        )
        if report.rows:
            prev = report.rows[-1]
            row.order_v = _order(prev.err_v, row.err_v)
            row.order_theta = _order(prev.err_theta, row.err_theta)
            row.order_F = _order(prev.err_F, row.err_F)
        report.rows.append(row)
    return report
