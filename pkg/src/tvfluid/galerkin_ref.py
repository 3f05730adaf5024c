"""Low-mode spectral Galerkin reference on the periodic unit square.

The unknowns are coefficients of L2-orthonormal trigonometric modes: exactly
divergence-free velocity modes, tensor modes E_ab * phi for F, and scalar
modes phi for the temperature.  Each equation is tested against every mode;
the pressure drops out because the velocity test functions are
divergence-free.  Integrals use the uniform midpoint rule on M = 3(2K+1)
points per axis, which integrates trigonometric polynomials of degree below
M exactly, so every polynomial nonlinearity of the constant-coefficient
model is integrated without quadrature error.

Only the constant-shear-modulus regime (direct temperature equation) is
implemented.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .constitutive import Regime
from .errors import BlowupDetected, IncompatibleScenario

TWO_PI = 2.0 * np.pi
BLOWUP = 1e12


def half_plane(K):
    """Wave vectors (kx, ky) with |kx|, |ky| <= K, one of each +-k pair."""
    return [(kx, ky) for kx in range(0, K + 1) for ky in range(-K, K + 1) if kx > 0 or ky > 0]


def _scalar_modes(K, x, y):
    """Values and gradients of the orthonormal scalar modes at points."""
    cols, gx, gy = [np.ones_like(x)], [np.zeros_like(x)], [np.zeros_like(x)]
    r2 = np.sqrt(2.0)
    for kx, ky in half_plane(K):
        arg = TWO_PI * (kx * x + ky * y)
        c, s = r2 * np.cos(arg), r2 * np.sin(arg)
        cols += [c, s]
        gx += [-TWO_PI * kx * s, TWO_PI * kx * c]
        gy += [-TWO_PI * ky * s, TWO_PI * ky * c]
    return np.stack(cols, -1), np.stack(gx, -1), np.stack(gy, -1)


def _velocity_modes(K, x, y):
    """Values (2, Q, N) and gradients (2, 2, Q, N), [a, b] = d omega_a / d x_b."""
    one, zero = np.ones_like(x), np.zeros_like(x)
    val = [[one, zero], [zero, one]]  # per mode: [component 0, component 1]
    grad = [[zero, zero, zero, zero]] * 2
    r2 = np.sqrt(2.0)
    for kx, ky in half_plane(K):
        nrm = np.hypot(kx, ky)
        e = (-ky / nrm, kx / nrm)
        arg = TWO_PI * (kx * x + ky * y)
        c, s = r2 * np.cos(arg), r2 * np.sin(arg)
        # d/dx_b cos = -2 pi k_b s, d/dx_b sin = 2 pi k_b c
        val.append([e[0] * c, e[1] * c])
        grad.append([-TWO_PI * e[a] * k * s for a in range(2) for k in (kx, ky)])
        val.append([e[0] * s, e[1] * s])
        grad.append([TWO_PI * e[a] * k * c for a in range(2) for k in (kx, ky)])
    V = np.stack([np.stack([m[a] for m in val], -1) for a in range(2)])
    G = np.stack([np.stack([m[i] for m in grad], -1) for i in range(4)]).reshape((2, 2) + V.shape[1:])
    return V, G


@dataclass
class GalerkinBasis:
    """Orthonormal trigonometric modes with cutoffs ``n_flow`` (v, F) and ``m_temp`` (theta)."""

    n_flow: int
    m_temp: int

    def __post_init__(self):
        if self.n_flow < 1 or self.m_temp < 1:
            raise ValueError("mode cutoffs must be positive")
        K = max(self.n_flow, self.m_temp)
        self.M = 3 * (2 * K + 1)
        c = (np.arange(self.M) + 0.5) / self.M
        x, y = np.meshgrid(c, c, indexing="ij")
        self.x, self.y = x.ravel(), y.ravel()
        self.weight = 1.0 / self.x.size
        self.omega, self.domega = _velocity_modes(self.n_flow, self.x, self.y)
        self.phi, self.phix, self.phiy = _scalar_modes(self.n_flow, self.x, self.y)
        self.chi, self.chix, self.chiy = _scalar_modes(self.m_temp, self.x, self.y)

    @property
    def n_velocity(self):
        return self.omega.shape[-1]

    @property
    def n_scalar(self):
        return self.phi.shape[-1]

    @property
    def n_temp(self):
        return self.chi.shape[-1]

    def gram(self):
        """Gram matrices of the three families under the quadrature (identity in exact arithmetic)."""
        w = self.weight
        gv = w * (np.einsum("aqi,aqj->ij", self.omega, self.omega))
        return gv, w * self.phi.T @ self.phi, w * self.chi.T @ self.chi

    def divergence(self):
        """Pointwise divergence of every velocity mode at the quadrature points."""
        return self.domega[0, 0] + self.domega[1, 1]


@dataclass
class CoeffState:
    alpha: np.ndarray
    beta: np.ndarray  # shape (2, 2, n_scalar)
    gamma: np.ndarray
    t: float = 0.0

    def flat(self):
        return np.concatenate([self.alpha, self.beta.ravel(), self.gamma])

    @classmethod
    def from_flat(cls, basis, y, t):
        nv, ns = basis.n_velocity, basis.n_scalar
        return cls(y[:nv].copy(), y[nv:nv + 4 * ns].reshape(2, 2, ns).copy(), y[nv + 4 * ns:].copy(), t)


def project_fields(basis, v_fn, F_fn, theta_fn, t=0.0):
    """L2 projection of callables (x, y) -> value onto the basis."""
    x, y, w = basis.x, basis.y, basis.weight
    v = np.stack([v_fn[a](x, y) for a in range(2)])
    alpha = w * np.einsum("aq,aqi->i", v, basis.omega)
    beta = np.array([[w * (F_fn[a][b](x, y) @ basis.phi) for b in range(2)] for a in range(2)])
    gamma = w * (np.broadcast_to(theta_fn(x, y), x.shape) @ basis.chi)
    return CoeffState(alpha, beta, gamma, t)


def _require_p1(model):
    if model.regime is not Regime.P1:
        raise ValueError("the Galerkin reference implements the constant-shear-modulus regime only")


def fields_at_quadrature(basis, c):
    q = basis.x.size
    v = (basis.omega.reshape(2 * q, -1) @ c.alpha).reshape(2, q)
    L = (basis.domega.reshape(4 * q, -1) @ c.alpha).reshape(2, 2, q)
    F = c.beta @ basis.phi.T
    Fx, Fy = c.beta @ basis.phix.T, c.beta @ basis.phiy.T
    th = basis.chi @ c.gamma
    thx, thy = basis.chix @ c.gamma, basis.chiy @ c.gamma
    return v, L, F, Fx, Fy, th, thx, thy


def _matmul_fields(A, B):
    """Pointwise 2x2 product of (2, 2, Q) arrays."""
    return np.stack([
        np.stack([A[a, 0] * B[0, b] + A[a, 1] * B[1, b] for b in range(2)]) for a in range(2)
    ])


def assemble_rhs(model, basis, coeffs, epsilon):
    """Time derivative of every coefficient (returned as a CoeffState)."""
    _require_p1(model)
    w = basis.weight
    v, L, F, Fx, Fy, th, thx, thy = fields_at_quadrature(basis, coeffs)
    nu, kappa, delta, g = model.nu(th), model.kappa(th), model.delta(th), model.g(th)
    D = 0.5 * (L + L.transpose(1, 0, 2))
    B = _matmul_fields(F, F.transpose(1, 0, 2))
    sigma = 2.0 * nu * D + 2.0 * g * B

    # momentum: int (v (x) v - sigma) : grad omega_j
    flux = np.einsum("aq,bq->abq", v, v) - sigma
    dalpha = w * (flux.reshape(-1) @ basis.domega.reshape(flux.size, -1))

    # F: int F_ab v_c d_c phi + (L F - delta/2 (B F - F))_ab phi - eps grad F_ab . grad phi
    LF = _matmul_fields(L, F)
    BF = _matmul_fields(B, F)
    local = LF - 0.5 * delta * (BF - F)
    transport_x = (F * v[0]) - epsilon * Fx
    transport_y = (F * v[1]) - epsilon * Fy
    dbeta = w * (transport_x @ basis.phix + transport_y @ basis.phiy + local @ basis.phi)

    # temperature: int theta v . grad chi - kappa grad theta . grad chi + production chi, over c_v
    bmi = B.copy()
    bmi[0, 0] -= 1.0
    bmi[1, 1] -= 1.0
    prod = 2.0 * nu * np.sum(D * D, axis=(0, 1)) + g * delta * np.sum(bmi * bmi, axis=(0, 1))
    cv = model.c_v
    dgamma = w * (
        (th * v[0] - kappa * thx / cv) @ basis.chix
        + (th * v[1] - kappa * thy / cv) @ basis.chiy
        + (prod / cv) @ basis.chi
    )
    return CoeffState(dalpha, dbeta, dgamma, coeffs.t)


def integrate_rk4(model, basis, coeffs, dt, T, epsilon, save_every=None):
    """Classical RK4 from ``coeffs.t`` to ``T``; returns the saved CoeffStates.

    The last step is shortened to land on T.  The initial state is always
    saved, then every ``save_every`` steps and the final state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    _require_p1(model)

    def rate(y, t):
        d = assemble_rhs(model, basis, CoeffState.from_flat(basis, y, t), epsilon)
        return d.flat()

    y, t = coeffs.flat(), coeffs.t
    traj = [CoeffState.from_flat(basis, y, t)]
    steps = 0
    while t < T * (1.0 - 1e-13):
        h = min(dt, T - t)
        k1 = rate(y, t)
        k2 = rate(y + 0.5 * h * k1, t + 0.5 * h)
        k3 = rate(y + 0.5 * h * k2, t + 0.5 * h)
        k4 = rate(y + h * k3, t + h)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        steps += 1
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP:
            raise BlowupDetected(f"Galerkin coefficients exceeded {BLOWUP:g} at t={t:.6g}")
        if (save_every and steps % save_every == 0) or t >= T * (1.0 - 1e-13):
            traj.append(CoeffState.from_flat(basis, y, t))
    return traj


def evaluate_on_grid(basis, coeffs, grid):
    """Galerkin fields at the cell centres of an FD grid: (v, F, theta)."""
    x, y = grid.centers()
    xs, ys = x.ravel(), y.ravel()
    om, _ = _velocity_modes(basis.n_flow, xs, ys)
    phi, _, _ = _scalar_modes(basis.n_flow, xs, ys)
    chi, _, _ = _scalar_modes(basis.m_temp, xs, ys)
    shape = x.shape
    v = np.einsum("aqi,i->aq", om, coeffs.alpha).reshape((2,) + shape)
    F = (coeffs.beta @ phi.T).reshape((2, 2) + shape)
    th = (chi @ coeffs.gamma).reshape(shape)
    return v, F, th


def kinetic_elastic_energy(coeffs):
    """1/2 sum alpha^2 + sum beta^2, i.e. int |v|^2/2 + int |F|^2."""
    return 0.5 * float(coeffs.alpha @ coeffs.alpha) + float(np.sum(coeffs.beta**2))


def energy_dissipation(model, basis, coeffs, epsilon):
    """The right side of the kinetic-elastic balance of the Galerkin system.

    With A = 1/2 |v|^2 + |F|^2 (constant shear modulus g = 1):
    d/dt A = -int(2 nu |Dv|^2 + delta (|F F^T|^2 - |F|^2) + 2 eps |grad F|^2),
    because the stretching work of F cancels the elastic stress power.
    """
    _require_p1(model)
    w = basis.weight
    v, L, F, Fx, Fy, th, _, _ = fields_at_quadrature(basis, coeffs)
    D = 0.5 * (L + L.transpose(1, 0, 2))
    B = np.einsum("acq,bcq->abq", F, F)
    nu, delta = model.nu(th), model.delta(th)
    dens = (
        2.0 * nu * np.sum(D * D, axis=(0, 1))
        + delta * (np.sum(B * B, axis=(0, 1)) - np.sum(F * F, axis=(0, 1)))
        + 2.0 * epsilon * np.sum(Fx * Fx + Fy * Fy, axis=(0, 1))
    )
    return -w * float(np.sum(dens))


# -- comparison with the finite-difference solver ---------------------------


@dataclass
class Trajectory:
    """Saved states of one run plus what is needed to check comparability."""

    model: object
    epsilon: float
    scenario: str
    times: List[float] = field(default_factory=list)
    fields: List[tuple] = field(default_factory=list)  # (v, F, theta) on the FD grid


@dataclass
class Discrepancy:
    t: float
    v: float
    F: float
    theta: float


def galerkin_trajectory(model, basis, coeff_traj, grid, epsilon, scenario):
    out = Trajectory(model, epsilon, scenario)
    for c in coeff_traj:
        out.times.append(c.t)
        out.fields.append(evaluate_on_grid(basis, c, grid))
    return out


def fd_trajectory(model, states, epsilon, scenario):
    out = Trajectory(model, epsilon, scenario)
    for s in states:
        out.times.append(s.t)
        out.fields.append((s.v, s.F, s.theta))
    return out


def _l2(grid_n, a):
    a = np.asarray(a)
    return float(np.sqrt(np.sum(a**2) / grid_n**2))


def compare_to_fd(gal, fd, time_tol=1e-9, init_tol=1e-8):
    """L2 discrepancies of v, F, theta at every common output time.

    Raises IncompatibleScenario when models, stress diffusion, scenario
    labels or the initial F and theta fields differ.
    """
    if gal.model != fd.model:
        raise IncompatibleScenario("the two runs use different material models")
    if gal.epsilon != fd.epsilon:
        raise IncompatibleScenario("the two runs use different stress-diffusion coefficients")
    if gal.scenario != fd.scenario:
        raise IncompatibleScenario(f"initial data differ: '{gal.scenario}' vs '{fd.scenario}'")
    n = fd.fields[0][2].shape[0]
    if gal.fields[0][2].shape != fd.fields[0][2].shape:
        raise IncompatibleScenario("runs are sampled on different grids")
    g0, f0 = gal.fields[0], fd.fields[0]
    if _l2(n, g0[1] - f0[1]) > init_tol or _l2(n, g0[2] - f0[2]) > init_tol:
        raise IncompatibleScenario("initial F or theta fields differ")
    out = []
    for i, t in enumerate(gal.times):
        j = _match(fd.times, t, time_tol)
        if j is None:
            continue
        gv, gF, gth = gal.fields[i]
        fv, fF, fth = fd.fields[j]
        out.append(Discrepancy(t, _l2(n, gv - fv), _l2(n, gF - fF), _l2(n, gth - fth)))
    if not out:
        raise IncompatibleScenario("no common output times")
    return out


def _match(times, t, tol) -> Optional[int]:
    for j, s in enumerate(times):
        if abs(s - t) <= tol:
            return j
    return None


def rk4_dt(model, basis, safety=0.5):
    """Stable RK4 step for the stiffest diffusive mode (RK4 reaches -2.78 on the real axis)."""
    th = np.array([0.5, 1.0, 2.0])
    diff = max(float(np.max(model.nu(th))), float(np.max(model.kappa(th))) / model.c_v)
    K = max(basis.n_flow, basis.m_temp)
    lam = 2.0 * diff * (TWO_PI * K) ** 2 * 2.0
    return safety * 2.78 / lam
