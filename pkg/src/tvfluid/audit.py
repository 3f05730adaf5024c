"""Thermodynamic bookkeeping on solver states.

Everything here is computed from states alone (fields plus the time step
between two of them), never from solver internals, so the same audits apply
to any discretisation that produces states.

Two of the balances need a term the plain identities do not have once the
stress diffusion eps * lap F is switched on:

* the direct temperature equation of regime P1 does not receive the work
  eps * g * dphi/dF : lap F, so its total energy changes by exactly that
  work (:func:`stress_diffusion_power`);
* on the internal-energy path the same work shows up in the entropy and in
  the renormalised temperature identity.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor2 as t2
from .constitutive import (
    Regime,
    elastic_energy_f,
    entropy_eta,
    h_lambda,
    internal_energy_e,
)
from .errors import NonPositiveTemperature
from .grid import NEUMANN

BUDGET_COLUMNS = (
    "t", "E_total", "E_kin", "E_int", "S_total", "P_entropy", "min_theta", "min_detF",
    "L2_v", "L2_gradv", "L2_F", "L4_F", "L1_theta", "L1_logtheta", "L1_fB", "L2_B",
)


@dataclass
class Norms:
    L2_v: float
    L2_gradv: float
    L2_F: float
    L4_F: float
    L1_theta: float
    L1_logtheta: float
    L1_fB: float
    L2_B: float


@dataclass
class BudgetRecord:
    t: float
    E_total: float
    E_kin: float
    E_int: float
    S_total: float
    P_entropy: float
    min_theta: float
    min_detF: float
    norms: Norms

    def row(self):
        flat = {k: v for k, v in asdict(self).items() if k != "norms"}
        flat.update(asdict(self.norms))
        return [flat[c] for c in BUDGET_COLUMNS]


def _strain_sq(L):
    D = 0.5 * (L + L.transpose(1, 0, 2, 3))
    return np.sum(D * D, axis=(0, 1))


def total_energy(model, state):
    """``(E_total, E_kin, E_int)`` with E_int the integral of e(theta, B)."""
    g = state.grid
    e_kin = g.integrate(0.5 * np.sum(state.v**2, axis=0))
    e_int = g.integrate(internal_energy_e(model, state.theta, state.B))
    return e_kin + e_int, e_kin, e_int


def total_entropy(model, state):
    return state.grid.integrate(entropy_eta(model, state.theta, state.B))


def entropy_production(model, state):
    """kappa |grad theta|^2/theta^2 + (2 nu |Dv|^2 + g delta |B - I|^2)/theta, pointwise."""
    th = state.theta
    if np.any(th <= 0):
        raise NonPositiveTemperature("temperature must be positive")
    grid = state.grid
    grad = grid.grad(th, NEUMANN)
    L = grid.grad_vector(state.v)
    bmi = t2.frob_norm_sq(t2.minus_identity(state.B))
    return (
        model.kappa(th) * np.sum(grad**2, axis=0) / th**2
        + (2.0 * model.nu(th) * _strain_sq(L) + model.g(th) * model.delta(th) * bmi) / th
    )


def _w(F):
    """d phi/dF = 2 (F - F^{-T}) for phi(F) = f(F F^T)."""
    finvt = t2.inv_transpose(t2.Mat2.from_array(F))
    return 2.0 * (F - np.array([[finvt.a11, finvt.a12], [finvt.a21, finvt.a22]]))


def stress_diffusion_density(state, epsilon):
    """eps * dphi/dF : lap F per cell (without the shear modulus)."""
    if not epsilon:
        return np.zeros_like(state.theta)
    lap = state.grid.laplacian(state.F, NEUMANN)
    return epsilon * np.sum(_w(state.F) * lap, axis=(0, 1))


def stress_diffusion_power(model, state, epsilon):
    """Integral of g(theta) eps dphi/dF : lap F (dissipative for constant g and F near I)."""
    return state.grid.integrate(model.g(state.theta) * stress_diffusion_density(state, epsilon))


def energy_drift(E0, E1, work_integral=0.0):
    """Relative change of the total energy after removing booked external work."""
    return (E1 - E0 - work_integral) / abs(E0)


def entropy_balance_residual(model, s0, s1, dt, epsilon=0.0, path="energy"):
    """[int eta]_1 - [int eta]_0 - dt * (trapezoidal production).

    On the internal-energy path the production includes the stress-diffusion
    term -g eps dphi/dF : lap F / theta; the direct P1 temperature equation
    has no such term.
    """
    def rate(s):
        p = s.grid.integrate(entropy_production(model, s))
        if path == "energy" and epsilon:
            p -= s.grid.integrate(model.g(s.theta) * stress_diffusion_density(s, epsilon) / s.theta)
        return p

    return total_entropy(model, s1) - total_entropy(model, s0) - 0.5 * dt * (rate(s0) + rate(s1))


def _lndetB(state):
    return np.log(t2.det(state.B))


def _stress_diffusion_lndet(state, epsilon):
    """eps * d(ln det B)/dF : lap F = 2 eps F^{-T} : lap F."""
    if not epsilon:
        return 0.0
    finvt = t2.inv_transpose(state.Fm)
    lap = state.grid.laplacian(state.F, NEUMANN)
    return 2.0 * epsilon * np.sum(np.array([[finvt.a11, finvt.a12], [finvt.a21, finvt.a22]]) * lap, axis=(0, 1))


def lndet_transport_residual(model, s0, s1, dt, epsilon=0.0):
    """Pointwise residual of d/dt ln det B + div(v ln det B) + delta tr(B - I) = 0.

    Time derivative by differencing, spatial terms averaged over the two
    states.  With ``epsilon`` the stress-diffusion source 2 eps F^{-T} : lap F
    of the regularised F equation is added to the identity.
    """
    def spatial(s):
        ld = _lndetB(s)
        B = s.B
        return (s.grid.advect(ld, s.v) + model.delta(s.theta) * (t2.trace(B) - 2.0)
                - _stress_diffusion_lndet(s, epsilon))

    return (_lndetB(s1) - _lndetB(s0)) / dt + 0.5 * (spatial(s0) + spatial(s1))


def f_transport_residual(model, s0, s1, dt, epsilon=0.0):
    """Pointwise residual of d/dt f(B) + div(f v) + delta |B-I|^2 - 2 (B - I) : Dv = 0.

    With ``epsilon`` the stress-diffusion source eps dphi/dF : lap F is included.
    """
    def spatial(s):
        B = s.B
        fB = elastic_energy_f(B)
        L = s.grid.grad_vector(s.v)
        bmi = t2.minus_identity(B)
        D = t2.sym(t2.Mat2.from_array(L))
        work = 2.0 * t2.frob_inner(bmi, D)
        return (s.grid.advect(fB, s.v) + model.delta(s.theta) * t2.frob_norm_sq(bmi) - work
                - stress_diffusion_density(s, epsilon))

    return (elastic_energy_f(s1.B) - elastic_energy_f(s0.B)) / dt + 0.5 * (spatial(s0) + spatial(s1))


def kinetic_energy_residual(model, s0, s1, dt):
    """Global residual of d/dt int |v|^2/2 + int 2 nu |Dv|^2 + int 2 g B : Dv = 0."""
    def rate(s):
        L = s.grid.grad_vector(s.v)
        th = s.theta
        D = t2.sym(t2.Mat2.from_array(L))
        bd = t2.frob_inner(s.B, D)
        return s.grid.integrate(2.0 * model.nu(th) * _strain_sq(L) + 2.0 * model.g(th) * bd)

    k0 = s0.grid.integrate(0.5 * np.sum(s0.v**2, axis=0))
    k1 = s1.grid.integrate(0.5 * np.sum(s1.v**2, axis=0))
    return (k1 - k0) / dt + 0.5 * (rate(s0) + rate(s1))


@dataclass
class RenormalizedResidual:
    """Residual of the renormalised temperature identity (global, as a rate).

    ``residual`` uses the relaxation weight g theta^(lam-1) - g' theta^lam + h;
    ``statement`` and ``proof`` use two alternative groupings, in which the
    first weight appears as theta^(lam-1) (they agree with each other and with
    ``residual`` when g = 1 or B = I).
    """

    residual: float
    statement: float
    proof: float


def _renormalized_terms(model, lam, s, epsilon):
    th = s.theta
    grid = s.grid
    B = s.B
    fB = elastic_energy_f(B)
    h = h_lambda(model, lam, th)
    g, dg = model.g(th), model.g.d1(th)
    tl = th**lam
    density = model.c_v * tl / lam - h * fB
    L = grid.grad_vector(s.v)
    D = t2.sym(t2.Mat2.from_array(L))
    bmi = t2.minus_identity(B)
    work = 2.0 * t2.frob_inner(bmi, D) * (dg * tl - h)
    grad = grid.grad(th, NEUMANN)
    base = (
        (1.0 - lam) * model.kappa(th) * np.sum(grad**2, axis=0) * th ** (lam - 2.0)
        + 2.0 * model.nu(th) * _strain_sq(L) * th ** (lam - 1.0)
    )
    relax = model.delta(th) * t2.frob_norm_sq(bmi)
    weight = g * th ** (lam - 1.0) - dg * tl + h
    eps_term = -stress_diffusion_density(s, epsilon) * weight
    right = base + relax * weight + eps_term
    # the two alternative groupings of the relaxation term
    statement = base + relax / th * (h * th ** (1.0 - lam) + 1.0 - dg * th) * tl + eps_term
    proof = base + model.delta(th) * (h + th ** (lam - 1.0) - dg * tl) * t2.frob_norm_sq(bmi) + eps_term
    integ = grid.integrate
    return integ(density), integ(work + right), integ(work + statement), integ(work + proof)


def renormalized_identity_residual(model, lam, s0, s1, dt, epsilon=0.0):
    """Global residual of the renormalised temperature identity between two states.

    Uses d/dt int(c_v theta^lam/lam - h_lam(theta) f(B)) = int[2 (B-I):Dv (g' theta^lam - h_lam)
    + (1-lam) kappa |grad theta|^2 theta^(lam-2) + 2 nu |Dv|^2 theta^(lam-1)
    + delta |B-I|^2 (g theta^(lam-1) - g' theta^lam + h_lam)] plus the stress-diffusion work.
    Transport and conduction fluxes integrate to zero on periodic or insulated domains.
    """
    if not 0.0 < lam < 2.0:
        raise ValueError("lambda must lie in (0, 2)")
    q0, r0, st0, pr0 = _renormalized_terms(model, lam, s0, epsilon)
    q1, r1, st1, pr1 = _renormalized_terms(model, lam, s1, epsilon)
    dq = (q1 - q0) / dt
    return RenormalizedResidual(
        residual=dq - 0.5 * (r0 + r1),
        statement=dq - 0.5 * (st0 + st1),
        proof=dq - 0.5 * (pr0 + pr1),
    )


def apriori_norms(model, state):
    grid = state.grid
    th = state.theta
    if np.any(th <= 0):
        raise NonPositiveTemperature("temperature must be positive")
    F = state.F
    L = grid.grad_vector(state.v)
    B = state.B
    fsq = np.sum(F * F, axis=(0, 1))
    return Norms(
        L2_v=np.sqrt(grid.integrate(np.sum(state.v**2, axis=0))),
        L2_gradv=np.sqrt(grid.integrate(np.sum(L**2, axis=(0, 1)))),
        L2_F=np.sqrt(grid.integrate(fsq)),
        L4_F=grid.integrate(fsq**2) ** 0.25,
        L1_theta=grid.integrate(np.abs(th)),
        L1_logtheta=grid.integrate(np.abs(np.log(th))),
        L1_fB=grid.integrate(np.abs(elastic_energy_f(B))),
        L2_B=np.sqrt(grid.integrate(t2.frob_norm_sq(B))),
    )


@dataclass
class PositivityReport:
    passed: bool
    min_theta: float
    min_detF: float
    theta_cell: tuple
    detF_cell: tuple
    message: str = ""


def positivity_check(state, r=None, regime=None):
    """min theta and min det F against theta >= r (P1) or strict positivity."""
    th = state.theta
    d = t2.det(state.Fm)
    tc = tuple(int(i) for i in np.unravel_index(int(np.argmin(th)), th.shape))
    dc = tuple(int(i) for i in np.unravel_index(int(np.argmin(d)), d.shape))
    min_th, min_d = float(th[tc]), float(d[dc])
    msgs = []
    if r is not None and (regime is None or Regime(regime) is Regime.P1):
        if min_th < r - 1e-10:
            msgs.append(f"theta={min_th:.6g} below r={r:g} at cell {tc}")
    elif not min_th > 0:
        msgs.append(f"theta={min_th:.6g} not positive at cell {tc}")
    if not min_d > 0:
        msgs.append(f"det F={min_d:.6g} not positive at cell {dc}")
    return PositivityReport(not msgs, min_th, min_d, tc, dc, "; ".join(msgs))


def budget_record(model, state):
    e_tot, e_kin, e_int = total_energy(model, state)
    prod = entropy_production(model, state)
    return BudgetRecord(
        t=state.t,
        E_total=e_tot,
        E_kin=e_kin,
        E_int=e_int,
        S_total=total_entropy(model, state),
        P_entropy=state.grid.integrate(prod),
        min_theta=float(np.min(state.theta)),
        min_detF=float(np.min(t2.det(state.Fm))),
        norms=apriori_norms(model, state),
    )


def budget_columns():
    return list(BUDGET_COLUMNS)
