"""Explicit time integration of the stress-diffusive thermoviscoelastic system.

Unknowns are the velocity v, the deformation gradient F (with B = F F^T), the
temperature theta and the pressure p.  One step is an explicit Heun step:

* momentum:  dv/dt = -div(v (x) v) + div(2 nu Dv + 2 g B) - grad p
* F:         dF/dt = -div(F (x) v) + grad(v) F - delta/2 (F F^T F - F) + eps lap F
* heat:      regime P1 evolves theta directly; P2/P3 evolve the internal energy
             e and recover theta pointwise from (e, B).

The spatial operators are chosen so that the semi-discrete scheme exchanges
energy exactly between the kinetic, elastic and thermal parts on periodic
grids: the viscous and elastic stresses use the same centred gradient as the
heat production, advective fluxes use face-averaged velocities (whose compact
divergence equals the centred divergence of v), and F is transported with an
entropy-conservative face state for the elastic energy f(F F^T).  What is
left is the stress-diffusion work eps * df/dF : lap F, which the P1 heat
equation does not see and which the energy audit books separately.
"""

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from . import tensor2 as t2
from .constitutive import Regime, elastic_energy_f, internal_energy_e
from .errors import CflViolation, NonPositiveTemperature, OutOfRange, PositivityLost
from .grid import NEUMANN, Grid


@dataclass(frozen=True)
class FixedDt:
    dt: float


@dataclass(frozen=True)
class CflDt:
    safety: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.safety < 1.0:
            raise ValueError("CFL safety factor must lie in (0, 1)")


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-3
    r: float = 0.1
    dt_policy: Union[FixedDt, CflDt] = field(default_factory=CflDt)
    projection_tol: float = 1e-10
    T: float = 0.1
    # "auto": theta for P1, internal energy otherwise
    temperature_path: str = "auto"
    preconditioner: str = "auto"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.epsilon == 0.0:
            warnings.warn("epsilon = 0 disables stress diffusion; such runs are experimental")
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")
        if self.temperature_path not in ("auto", "theta", "energy"):
            raise ValueError("temperature_path must be 'auto', 'theta' or 'energy'")


@dataclass
class State:
    grid: Grid
    v: np.ndarray
    F: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @property
    def Fm(self):
        return t2.Mat2.from_array(self.F)

    @property
    def B(self):
        return t2.bb_from_f(self.Fm)

    def copy(self):
        return State(self.grid, self.v.copy(), self.F.copy(), self.theta.copy(), self.p.copy(), self.t)


def make_state(grid, v=None, F=None, theta=None, p=None, t=0.0):
    """State with defaults v = 0, F = I, theta = 1, p = 0."""
    n = grid.n
    if v is None:
        v = np.zeros((2, n, n))
    if F is None:
        F = np.zeros((2, 2, n, n))
        F[0, 0] = F[1, 1] = 1.0
    if theta is None:
        theta = np.ones((n, n))
    if p is None:
        p = np.zeros((n, n))
    return State(grid, np.asarray(v, float), np.asarray(F, float), np.asarray(theta, float),
                 np.asarray(p, float), float(t))


def temperature_path(model, config):
    path = config.temperature_path
    if path == "auto":
        return "theta" if model.regime is Regime.P1 else "energy"
    if path == "theta" and model.regime is Regime.P3:
        raise ValueError("regime P3 has no closed temperature equation; use the energy path")
    return path


def _stack(M):
    return np.array([[M.a11, M.a12], [M.a21, M.a22]])


def _sym_stack(S):
    return np.array([[S.b11, S.b12], [S.b12, S.b22]])


def ec_face_state(FL, FR, floor=1e-14):
    """Face value of F that transports f(F F^T) without spurious sources.

    Chooses F* = mean + c * dw, with w = 2 (F - F^{-T}) the derivative of
    phi(F) = |F|^2 - 2 - 2 ln det F, so that dw : F* equals the jump of
    |F|^2 + 2 ln det F.  Faces with a negligible jump in w keep the mean.
    """
    ML, MR = t2.Mat2.from_array(FL), t2.Mat2.from_array(FR)
    dw = 2.0 * ((FR - _stack(t2.inv_transpose(MR))) - (FL - _stack(t2.inv_transpose(ML))))
    psi_l = np.sum(FL * FL, axis=(0, 1)) + 2.0 * np.log(t2.det(ML))
    psi_r = np.sum(FR * FR, axis=(0, 1)) + 2.0 * np.log(t2.det(MR))
    mean = 0.5 * (FL + FR)
    num = (psi_r - psi_l) - np.sum(dw * mean, axis=(0, 1))
    den = np.sum(dw * dw, axis=(0, 1))
    c = np.where(den > floor, num / np.where(den > floor, den, 1.0), 0.0)
    return mean + c * dw


def advect_F(grid, F, v, floor=1e-14):
    """``div(F (x) v)`` with the face state of :func:`ec_face_state`.

    Same result as ``grid.advect(F, v, face_state=ec_face_state)``, but the
    per-cell quantities w and |F|^2 + 2 ln det F are formed once.
    """
    d = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    finvt = np.array([[F[1, 1], -F[1, 0]], [-F[0, 1], F[0, 0]]]) / d
    w = 2.0 * (F - finvt)
    psi = np.einsum("ab...,ab...->...", F, F) + 2.0 * np.log(d)
    out = 0.0
    for axis in (-2, -1):
        U = grid.face_velocity(v, axis)
        Fr = grid.shift(F, axis, 1, NEUMANN)
        dw = grid.shift(w, axis, 1, NEUMANN) - w
        mean = 0.5 * (F + Fr)
        num = grid.shift(psi, axis, 1, NEUMANN) - psi - np.einsum("ab...,ab...->...", dw, mean)
        den = np.einsum("ab...,ab...->...", dw, dw)
        c = np.where(den > floor, num / np.where(den > floor, den, 1.0), 0.0)
        out = out + grid.flux_divergence(U * (mean + c * dw), axis)
    return out


def velocity_gradient(state):
    return state.grid.grad_vector(state.v)


def deviatoric_stress(model, state, L=None):
    """2 nu(theta) Dv + 2 g(theta) F F^T; the isotropic part goes to the pressure."""
    L = velocity_gradient(state) if L is None else L
    D = 0.5 * (L + L.transpose(1, 0, 2, 3))
    nu, g = model.nu(state.theta), model.g(state.theta)
    return 2.0 * nu * D + 2.0 * g * _sym_stack(state.B)


def rhs_momentum(model, state, L=None, sigma=None):
    grid = state.grid
    sigma = deviatoric_stress(model, state, L) if sigma is None else sigma
    return -grid.advect(state.v, state.v) + grid.div_tensor(sigma, NEUMANN)


def rhs_F(model, state, epsilon, L=None):
    grid = state.grid
    L = velocity_gradient(state) if L is None else L
    F = state.F
    Fm = state.Fm
    BF = _stack(t2.matmul(state.B, Fm))
    delta = model.delta(state.theta)
    stretch = np.einsum("ab...,bc...->ac...", L, F)
    out = -advect_F(grid, F, state.v) + stretch - 0.5 * delta * (BF - F)
    if epsilon:
        out = out + epsilon * grid.laplacian(F, NEUMANN)
    return out


def heat_production(model, state, L=None):
    """2 nu |Dv|^2 + g delta |B - I|^2, the dissipation feeding the temperature."""
    L = velocity_gradient(state) if L is None else L
    D = 0.5 * (L + L.transpose(1, 0, 2, 3))
    th = state.theta
    BmI = t2.frob_norm_sq(t2.minus_identity(state.B))
    return 2.0 * model.nu(th) * np.sum(D * D, axis=(0, 1)) + model.g(th) * model.delta(th) * BmI


def rhs_theta(model, state, path=None, L=None, sigma=None):
    """Right side of the evolved heat variable.

    ``path="theta"`` returns d(theta)/dt (regime P1, or P2 where e = c_v theta);
    ``path="energy"`` returns de/dt for the internal energy.
    """
    if np.any(state.theta <= 0):
        raise NonPositiveTemperature("temperature must be positive")
    grid = state.grid
    path = ("theta" if model.regime is Regime.P1 else "energy") if path is None else path
    L = velocity_gradient(state) if L is None else L
    th = state.theta
    conduction = grid.diffuse(th, model.kappa(th), NEUMANN)
    if path == "theta":
        if model.regime is Regime.P1:
            production = heat_production(model, state, L)
        else:
            sigma = deviatoric_stress(model, state, L) if sigma is None else sigma
            production = np.sum(sigma * L, axis=(0, 1))
        return -grid.advect(th, state.v) + (conduction + production) / model.c_v
    sigma = deviatoric_stress(model, state, L) if sigma is None else sigma
    e = internal_energy_e(model, th, state.B)
    return -grid.advect(e, state.v) + conduction + np.sum(sigma * L, axis=(0, 1))


def invert_internal_energy(model, e_val, B, theta_guess=None, rtol=1e-12, maxiter=200):
    """Temperature with internal_energy_e(model, theta, B) == e_val.

    Safeguarded Newton iteration on the bracket (0, (e - g(0) f)/c_v]; the
    upper end is valid because concavity of g gives g - theta g' >= g(0).
    """
    e_val = np.asarray(e_val, float)
    fB = elastic_energy_f(B)
    e_val, fB = np.broadcast_arrays(e_val, fB)
    scalar = e_val.ndim == 0
    e_val = np.atleast_1d(e_val).astype(float)
    fB = np.atleast_1d(fB).astype(float)
    floor = model.g(0.0) * fB
    bad = ~(e_val > floor)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), e_val.shape)
        raise OutOfRange(
            f"internal energy {e_val[idx]:.6g} at index {idx} is not above its zero-temperature "
            f"limit {floor[idx]:.6g}"
        )
    lo = np.zeros_like(e_val)
    hi = (e_val - floor) / model.c_v
    if theta_guess is None:
        th = hi.copy()
    else:
        th = np.broadcast_to(np.asarray(theta_guess, float), e_val.shape).copy()
        out = ~((th > lo) & (th <= hi))
        th[out] = hi[out]
    g, d1, d2 = model.g, model.g.d1, model.g.d2
    c_v = model.c_v
    for _ in range(maxiter):
        r = c_v * th + (g(th) - th * d1(th)) * fB - e_val
        hi = np.where(r > 0, th, hi)
        lo = np.where(r < 0, th, lo)
        slope = c_v - th * d2(th) * fB
        new = th - r / slope
        # the upper end is admissible: for linear g it is the exact root
        outside = ~((new > lo) & (new <= hi)) & (r != 0)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.abs(new - th) <= rtol * np.abs(th)
        th = new
        if np.all(done):
            break
    else:
        raise OutOfRange("internal-energy inversion did not converge")
    return float(th[0]) if scalar else th


def init_theta_cutoff(theta0, r):
    """Keep theta0 where r <= theta0 <= 1/r, replace it by 1 elsewhere."""
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    theta0 = np.asarray(theta0, float)
    keep = (theta0 >= r) & (theta0 <= 1.0 / r)
    return np.where(keep, theta0, 1.0)


def cfl_dt(model, config, state, safety=None):
    """safety * min(h / (|v|_max + 1e-8), h^2 / (4 max(nu, kappa/c_v, eps)))."""
    if safety is None:
        policy = config.dt_policy
        safety = policy.safety if isinstance(policy, CflDt) else 1.0
    h = state.grid.h
    vmax = float(np.max(np.sqrt(np.sum(state.v**2, axis=0))))
    nu_max = float(np.max(model.nu(state.theta)))
    kappa_max = float(np.max(model.kappa(state.theta))) / model.c_v
    diff = max(nu_max, kappa_max, config.epsilon)
    return safety * min(h / (vmax + 1e-8), h * h / (4.0 * diff))


def choose_dt(model, config, state):
    policy = config.dt_policy
    if isinstance(policy, FixedDt):
        bound = cfl_dt(model, config, state, safety=1.0)
        if policy.dt > 2.0 * bound:
            raise CflViolation(f"fixed dt={policy.dt:.3e} exceeds twice the stability bound {bound:.3e}")
        return policy.dt
    return cfl_dt(model, config, state)


def _check_positive(state):
    th = state.theta
    if not np.all(th > 0):
        cell = np.unravel_index(int(np.argmin(th)), th.shape)
        raise PositivityLost("theta", cell, th[cell])
    d = t2.det(state.Fm)
    if not np.all(d > 0):
        cell = np.unravel_index(int(np.argmin(d)), d.shape)
        raise PositivityLost("detF", cell, d[cell])


Forcing = Callable[[float], tuple]


def _rates(model, config, state, path, forcing, q=None):
    """All three right sides at once through the fused kernel."""
    th = state.theta
    if np.any(th <= 0):
        raise NonPositiveTemperature("temperature must be positive")
    if q is None:
        q = _heat_variable(model, state, path)
    if path == "energy":
        mode = kernels.HEAT_ENERGY
    elif model.regime is Regime.P1:
        mode = kernels.HEAT_P1
    else:
        mode = kernels.HEAT_THETA_STRESS
    coef = [np.broadcast_to(np.asarray(f(th), float), th.shape) for f in
            (model.nu, model.kappa, model.delta, model.g)]
    rv, rF, rq = kernels.fused_rates(
        state.v, state.F, th, np.ascontiguousarray(q), *[np.ascontiguousarray(c) for c in coef],
        float(config.epsilon), float(model.c_v), state.grid.h, state.grid.periodic, mode,
    )
    if forcing is not None:
        sv, sF, sq = forcing(state.t)
        rv, rF, rq = rv + sv, rF + sF, rq + sq
    return rv, rF, rq


def reference_rates(model, config, state, path=None):
    """Right sides composed from the grid operators (slow, used as a check)."""
    path = temperature_path(model, config) if path is None else path
    L = velocity_gradient(state)
    sigma = deviatoric_stress(model, state, L)
    return (
        rhs_momentum(model, state, L, sigma),
        rhs_F(model, state, config.epsilon, L),
        rhs_theta(model, state, path, L, sigma),
    )


def _heat_variable(model, state, path):
    if path == "theta":
        return state.theta
    return internal_energy_e(model, state.theta, state.B)


def _recover_theta(model, q, F, path, guess):
    if path == "theta":
        return q
    B = t2.bb_from_f(t2.Mat2.from_array(F))
    try:
        return invert_internal_energy(model, q, B, theta_guess=guess)
    except OutOfRange:
        floor = model.g(0.0) * elastic_energy_f(B)
        margin = q - floor
        cell = np.unravel_index(int(np.argmin(margin)), margin.shape)
        raise PositivityLost("theta", cell, margin[cell]) from None


def step(model, config, state, forcing: Optional[Forcing] = None, dt=None):
    """Advance ``state`` by one Heun step and return the new state."""
    grid = state.grid
    path = temperature_path(model, config)
    dt = choose_dt(model, config, state) if dt is None else float(dt)
    tol, pc = config.projection_tol, config.preconditioner

    q0 = _heat_variable(model, state, path)
    rv0, rF0, rq0 = _rates(model, config, state, path, forcing, q0)

    v1, _ = grid.project_div_free(state.v + dt * rv0, tol, pc)
    F1 = state.F + dt * rF0
    mid = State(grid, v1, F1, state.theta, state.p, state.t + dt)
    if not np.all(t2.det(mid.Fm) > 0):
        _check_positive(mid)
    q1 = q0 + dt * rq0
    mid.theta = _recover_theta(model, q1, F1, path, state.theta)
    _check_positive(mid)

    rv1, rF1, rq1 = _rates(model, config, mid, path, forcing, q1)
    v_new, phi = grid.project_div_free(state.v + 0.5 * dt * (rv0 + rv1), tol, pc)
    F_new = state.F + 0.5 * dt * (rF0 + rF1)
    new = State(grid, v_new, F_new, state.theta, phi / dt if dt > 0 else state.p, state.t + dt)
    if not np.all(t2.det(new.Fm) > 0):
        _check_positive(new)
    new.theta = _recover_theta(model, q0 + 0.5 * dt * (rq0 + rq1), F_new, path, mid.theta)
    _check_positive(new)
    return new


def run(model, config, state, callback=None, forcing=None, max_steps=None):
    """Step until ``config.T``; the last step is shortened to land on T.

    ``callback(state, dt)`` is called after every accepted step.
    """
    T = config.T
    steps = 0
    while state.t < T * (1.0 - 1e-13) and (max_steps is None or steps < max_steps):
        dt = min(choose_dt(model, config, state), T - state.t)
        state = step(model, config, state, forcing, dt)
        steps += 1
        if callback is not None:
            callback(state, dt)
    return state


def with_theta_path(config):
    """Copy of ``config`` forcing the direct temperature path."""
    return replace(config, temperature_path="theta")


def with_end_time(config, T):
    return replace(config, T=float(T))
