"""Material functions and thermodynamic potentials.

The free energy is psi = -c_v theta (ln theta - 1) + g(theta) f(B) with the
elastic energy f(B) = tr B - 2 - ln det B.  Entropy and internal energy follow
from psi by the usual Legendre relations.  Material functions are named
presets with parameters (not arbitrary callables) so their derivatives are
analytic and they can be written to and read from config files.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor2 as t2
from .errors import NonPositiveTemperature, NotPositiveDefinite
from .quadrature import adaptive_simpson


class Regime(str, Enum):
    P1 = "P1"  # constant shear modulus
    P2 = "P2"  # shear modulus linear in temperature
    P3 = "P3"  # bounded, concave, increasing shear modulus


# name -> (default parameters, value, first derivative, second derivative)
def _constant(p, s):
    return np.full_like(s, p["value"])


def _zero(p, s):
    return np.zeros_like(s)


_PRESETS = {
    "constant": (
        {"value": 1.0},
        _constant,
        _zero,
        _zero,
    ),
    "linear": (
        {"slope": 1.0},
        lambda p, s: p["slope"] * s,
        lambda p, s: np.full_like(s, p["slope"]),
        _zero,
    ),
    "affine": (
        {"c0": 1.0, "c1": 1.0},
        lambda p, s: p["c0"] + p["c1"] * s,
        lambda p, s: np.full_like(s, p["c1"]),
        _zero,
    ),
    "concave_rational": (
        # a - b/(1+s)
        {"a": 2.0, "b": 1.0},
        lambda p, s: p["a"] - p["b"] / (1.0 + s),
        lambda p, s: p["b"] / (1.0 + s) ** 2,
        lambda p, s: -2.0 * p["b"] / (1.0 + s) ** 3,
    ),
    "saturating": (
        # c0 + c1 s/(1+s), a bounded variable coefficient for nu or kappa
        {"c0": 1.0, "c1": 0.5},
        lambda p, s: p["c0"] + p["c1"] * s / (1.0 + s),
        lambda p, s: p["c1"] / (1.0 + s) ** 2,
        lambda p, s: -2.0 * p["c1"] / (1.0 + s) ** 3,
    ),
    "exponential": (
        {"scale": 1.0},
        lambda p, s: p["scale"] * np.exp(s),
        lambda p, s: p["scale"] * np.exp(s),
        lambda p, s: p["scale"] * np.exp(s),
    ),
}

PRESET_NAMES = tuple(_PRESETS)


@dataclass(frozen=True)
class MaterialFunction:
    """A scalar function of temperature given by preset name and parameters."""

    name: str
    params: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.name not in _PRESETS:
            raise ValueError(f"unknown material preset '{self.name}'; choose from {PRESET_NAMES}")
        defaults = _PRESETS[self.name][0]
        unknown = set(dict(self.params)) - set(defaults)
        if unknown:
            raise ValueError(f"preset '{self.name}' has no parameter(s) {sorted(unknown)}")
        merged = dict(defaults)
        merged.update(dict(self.params))
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    @classmethod
    def make(cls, name, **params):
        return cls(name, tuple(sorted((k, float(v)) for k, v in params.items())))

    @property
    def p(self) -> Dict[str, float]:
        return dict(self.params)

    def _eval(self, which, s):
        arr = np.asarray(s, dtype=float)
        out = _PRESETS[self.name][which](self.p, arr)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, s):
        return self._eval(1, s)

    def d1(self, s):
        return self._eval(2, s)

    def d2(self, s):
        return self._eval(3, s)

    @property
    def is_constant(self):
        return self.name == "constant"


@dataclass(frozen=True)
class MaterialModel:
    nu: MaterialFunction
    kappa: MaterialFunction
    delta: MaterialFunction
    g: MaterialFunction
    regime: Regime = Regime.P3
    c_v: float = 1.0
    C1: float = 1.0
    C2: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not self.c_v > 0:
            raise ValueError("c_v must be positive")
        if not (self.C1 > 0 and self.C2 > 0):
            raise ValueError("bound constants C1, C2 must be positive")


def preset_model(regime, c_v=1.0):
    """Canonical material model for one of the three shear-modulus regimes."""
    regime = Regime(regime)
    one = MaterialFunction.make("constant", value=1.0)
    if regime is Regime.P1:
        return MaterialModel(one, one, one, one, regime, c_v)
    if regime is Regime.P2:
        return MaterialModel(one, one, one, MaterialFunction.make("linear", slope=1.0), regime, c_v)
    return MaterialModel(
        one,
        one,
        MaterialFunction.make("affine", c0=1.0, c1=1.0),
        MaterialFunction.make("concave_rational", a=2.0, b=1.0),
        regime,
        c_v,
    )


def _check_theta(theta):
    if np.any(np.asarray(theta) <= 0.0):
        raise NonPositiveTemperature("temperature must be positive")


def elastic_energy_f(B):
    """f(B) = tr B - 2 - ln det B."""
    d = t2.det(B)
    if np.any(np.asarray(d) <= 0.0) or np.any(np.asarray(B.b11) <= 0.0):
        raise NotPositiveDefinite("f(B) needs det B > 0")
    return t2.trace(B) - 2.0 - np.log(d)


def helmholtz_psi(model, theta, B):
    _check_theta(theta)
    return -model.c_v * theta * (np.log(theta) - 1.0) + model.g(theta) * elastic_energy_f(B)


def entropy_eta(model, theta, B):
    _check_theta(theta)
    return model.c_v * np.log(theta) - model.g.d1(theta) * elastic_energy_f(B)


def internal_energy_e(model, theta, B):
    _check_theta(theta)
    g, dg = model.g(theta), model.g.d1(theta)
    return model.c_v * theta + (g - theta * dg) * elastic_energy_f(B)


def de_dtheta(model, theta, fB):
    """Partial derivative of e in theta at fixed B, given f(B)."""
    return model.c_v - theta * model.g.d2(theta) * fB


def dpsi_dB(model, theta, B):
    """g(theta) (I - B^{-1})."""
    _check_theta(theta)
    Binv = t2.invert_spd(B)
    g = model.g(theta)
    return t2.SymMat2(g * (1.0 - Binv.b11), -g * Binv.b12, g * (1.0 - Binv.b22))


def h_lambda(model, lam, s, tol=1e-10, max_levels=60):
    """Integral of z**lam * g''(z) from 0 to s, vectorized over ``lam`` and ``s``.

    The substitution z = u**2 turns the integrand into 2 u**(2 lam + 1) g''(u**2)
    on [0, sqrt(s)], which is far smoother at the origin than z**lam, so the
    endpoint needs few bisections.  For a single ``lam`` and many ``s`` (a
    temperature field) the distinct values are sorted and integrated piecewise
    between neighbours.
    """
    lam, s = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(s, dtype=float))
    if not np.all(lam > 0):
        raise ValueError("lambda must be positive")
    if np.any(s < 0):
        raise ValueError("h_lambda needs s >= 0")
    d2 = model.g.d2
    if not np.any(s):
        return float(0.0) if s.ndim == 0 else np.zeros_like(s)
    lam_vals = np.unique(lam)
    if s.size > 1 and lam_vals.size == 1:
        p = 2.0 * float(lam_vals[0]) + 1.0
        u, inv = np.unique(np.sqrt(s), return_inverse=True)
        a = np.concatenate([[0.0], u[:-1]])
        piece_tol = np.full(u.size, 0.5 * tol / u.size)
        piece_tol[0] = 0.5 * tol
        pieces = adaptive_simpson(lambda w: 2.0 * np.power(w, p) * d2(w * w), a, u, tol=piece_tol,
                                  max_levels=max_levels)
        return np.cumsum(pieces)[inv].reshape(s.shape)
    p_flat = 2.0 * lam.ravel() + 1.0

    def integrand(w, idx):
        return 2.0 * np.power(w, p_flat[idx]) * d2(w * w)

    root = np.sqrt(s)
    return adaptive_simpson(integrand, np.zeros_like(root), root, tol=tol, max_levels=max_levels, indexed=True)


@dataclass
class BoundCheck:
    name: str
    passed: bool
    first_violation: Optional[float] = None
    detail: str = ""


@dataclass
class ValidationReport:
    regime: Regime
    checks: List[BoundCheck] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def lines(self):
        out = []
        for c in self.checks:
            status = "pass" if c.passed else f"FAIL at s={c.first_violation:.6g}"
            out.append(f"{c.name:24s} {status} {c.detail}".rstrip())
        return out


def _check(name, s, ok, detail=""):
    ok = np.asarray(ok, dtype=bool)
    if ok.all():
        return BoundCheck(name, True, None, detail)
    return BoundCheck(name, False, float(s[np.argmin(ok)]), detail)


def validate_bounds(model, sample_max=1e3, n_samples=2000, rtol=1e-12):
    """Sample the structural assumptions on the material functions.

    The sample points are 0 followed by a geometric sequence up to
    ``sample_max``.  Violations are reported, never raised.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    s = np.concatenate([[0.0], np.geomspace(sample_max * 1e-8, sample_max, n_samples - 1)])
    C1, C2 = model.C1, model.C2
    lo = lambda x: x * (1 - rtol)  # noqa: E731
    hi = lambda x: x * (1 + rtol)  # noqa: E731
    report = ValidationReport(model.regime)

    def between(fn, lower, upper):
        v = fn(s)
        return (v >= lo(lower)) & (v <= hi(upper))

    report.checks.append(_check("kappa_bounded", s, between(model.kappa, C1, C2), "C1 <= kappa <= C2"))
    report.checks.append(_check("nu_bounded", s, between(model.nu, C1, C2), "C1 <= nu <= C2"))

    # fast-growing candidates may overflow to inf, which the checks then reject
    with np.errstate(over="ignore", invalid="ignore"):
        g, dg, d2g = model.g(s), model.g.d1(s), model.g.d2(s)
        if model.regime is Regime.P3:
            dv = model.delta(s)
            ok = (dv >= lo(C1 * (1 + s))) & (dv <= hi(C2 * (1 + s)))
            report.checks.append(_check("delta_growth", s, ok, "C1(1+s) <= delta <= C2(1+s)"))
            report.checks.append(_check("g_bounded", s, (g >= lo(C1)) & (g <= hi(C2)), "C1 <= g <= C2"))
            w = (1 + s) * dg
            report.checks.append(
                _check("g_derivative_bounded", s, (w >= 0) & (w <= hi(C2)), "0 <= (1+s) g' <= C2")
            )
            report.checks.append(_check("g_concave", s, d2g <= 0, "g'' <= 0"))
            report.checks.append(_check("g_increasing", s, dg >= 0, "g' >= 0"))
        else:
            report.checks.append(_check("delta_bounded", s, between(model.delta, C1, C2), "C1 <= delta <= C2"))
            if model.regime is Regime.P1:
                ok = (np.abs(dg) == 0) & (g > 0)
                report.checks.append(_check("g_constant", s, ok, "g = const > 0"))
            else:
                ok = (np.abs(d2g) == 0) & (np.abs(g - dg * s) <= 1e-12 * (1 + np.abs(g))) & (dg > 0)
                report.checks.append(_check("g_linear", s, ok, "g = slope * s, slope > 0"))
    return report
