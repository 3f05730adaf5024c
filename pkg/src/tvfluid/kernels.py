"""Fused cell loops for the solver right-hand sides.

These compute exactly what the operator compositions in :mod:`tvfluid.solver`
compute (same stencils, same ghost parities, same face states) in two passes
over the grid, which avoids the per-call overhead of several hundred small
numpy operations per stage.  The numpy versions remain the reference and the
tests compare the two to round-off.

Material coefficients arrive as arrays already evaluated at the cell
temperatures, so the kernels stay independent of the material presets.
"""

import numpy as np
from numba import njit

# heat-equation variants
HEAT_P1 = 0  # d theta/dt with production 2 nu |Dv|^2 + g delta |B-I|^2, divided by c_v
HEAT_THETA_STRESS = 1  # d theta/dt with production sigma : grad v, divided by c_v
HEAT_ENERGY = 2  # de/dt with production sigma : grad v


@njit(cache=True, inline="always")
def _nb(i, step, n, periodic):
    """Neighbour index and ghost flag along one axis."""
    j = i + step
    if j < 0 or j >= n:
        if periodic:
            return j % n, False
        return i, True
    return j, False


@njit(cache=True)
def fused_rates(v, F, theta, q, nu, kappa, delta, g, eps, c_v, h, periodic, heat_mode):
    """Return ``(rv, rF, rq)`` for one stage.

    ``q`` is the transported heat variable (theta or e).  Momentum omits the
    pressure gradient; the caller projects.
    """
    n = theta.shape[0]
    inv2h = 0.5 / h
    invh = 1.0 / h
    invh2 = 1.0 / (h * h)

    L = np.empty((2, 2, n, n))
    sig = np.empty((2, 2, n, n))
    w = np.empty((2, 2, n, n))
    psi = np.empty((n, n))
    rq = np.empty((n, n))

    # pass 1: cell quantities
    for i in range(n):
        ip, gxp = _nb(i, 1, n, periodic)
        im, gxm = _nb(i, -1, n, periodic)
        for j in range(n):
            jp, gyp = _nb(j, 1, n, periodic)
            jm, gym = _nb(j, -1, n, periodic)
            for a in range(2):
                vp = -v[a, i, j] if gxp else v[a, ip, j]
                vm = -v[a, i, j] if gxm else v[a, im, j]
                L[a, 0, i, j] = (vp - vm) * inv2h
                vp = -v[a, i, j] if gyp else v[a, i, jp]
                vm = -v[a, i, j] if gym else v[a, i, jm]
                L[a, 1, i, j] = (vp - vm) * inv2h
            f11 = F[0, 0, i, j]
            f12 = F[0, 1, i, j]
            f21 = F[1, 0, i, j]
            f22 = F[1, 1, i, j]
            b11 = f11 * f11 + f12 * f12
            b12 = f11 * f21 + f12 * f22
            b22 = f21 * f21 + f22 * f22
            d12 = 0.5 * (L[0, 1, i, j] + L[1, 0, i, j])
            tn = 2.0 * nu[i, j]
            tg = 2.0 * g[i, j]
            sig[0, 0, i, j] = tn * L[0, 0, i, j] + tg * b11
            sig[0, 1, i, j] = tn * d12 + tg * b12
            sig[1, 0, i, j] = tn * d12 + tg * b12
            sig[1, 1, i, j] = tn * L[1, 1, i, j] + tg * b22
            det = f11 * f22 - f12 * f21
            w[0, 0, i, j] = 2.0 * (f11 - f22 / det)
            w[0, 1, i, j] = 2.0 * (f12 + f21 / det)
            w[1, 0, i, j] = 2.0 * (f21 + f12 / det)
            w[1, 1, i, j] = 2.0 * (f22 - f11 / det)
            psi[i, j] = f11 * f11 + f12 * f12 + f21 * f21 + f22 * f22 + 2.0 * np.log(det)

            # production
            if heat_mode == HEAT_P1:
                dd = L[0, 0, i, j] ** 2 + 2.0 * d12 * d12 + L[1, 1, i, j] ** 2
                bmi = (b11 - 1.0) ** 2 + 2.0 * b12 * b12 + (b22 - 1.0) ** 2
                rq[i, j] = (2.0 * nu[i, j] * dd + g[i, j] * delta[i, j] * bmi) / c_v
            else:
                prod = 0.0
                for a in range(2):
                    for b in range(2):
                        prod += sig[a, b, i, j] * L[a, b, i, j]
                rq[i, j] = prod / c_v if heat_mode == HEAT_THETA_STRESS else prod

    rv = np.zeros((2, n, n))
    rF = np.zeros((2, 2, n, n))
    heat_scale = 1.0 if heat_mode == HEAT_ENERGY else 1.0 / c_v

    # pass 2a: plus-face fluxes along each axis, accumulated into both cells
    fF = np.empty((2, 2))
    for axis in range(2):
        for i in range(n):
            for j in range(n):
                if axis == 0:
                    k, k_ghost = _nb(i, 1, n, periodic)
                    ii, jj = k, j
                    un = v[0, i, j]
                else:
                    k, k_ghost = _nb(j, 1, n, periodic)
                    ii, jj = i, k
                    un = v[1, i, j]
                if k_ghost:
                    U = 0.0
                else:
                    U = 0.5 * (un + (v[axis, ii, jj]))
                # neighbour values with even ghosts (ghost == own cell)
                if k_ghost:
                    ii, jj = i, j
                # conduction flux (present on wall faces as zero gradient)
                kf = 0.5 * (kappa[i, j] + kappa[ii, jj])
                cond = kf * (theta[ii, jj] - theta[i, j]) * invh2 * heat_scale
                flux_q = U * 0.5 * (q[i, j] + q[ii, jj]) * invh
                # momentum flux
                m0 = U * 0.5 * (v[0, i, j] + v[0, ii, jj]) * invh
                m1 = U * 0.5 * (v[1, i, j] + v[1, ii, jj]) * invh
                # entropy-conservative F state
                num = psi[ii, jj] - psi[i, j]
                den = 0.0
                for a in range(2):
                    for b in range(2):
                        dw = w[a, b, ii, jj] - w[a, b, i, j]
                        num -= dw * 0.5 * (F[a, b, i, j] + F[a, b, ii, jj])
                        den += dw * dw
                c = num / den if den > 1e-14 else 0.0
                for a in range(2):
                    for b in range(2):
                        dw = w[a, b, ii, jj] - w[a, b, i, j]
                        fF[a, b] = U * (0.5 * (F[a, b, i, j] + F[a, b, ii, jj]) + c * dw) * invh
                # cell (i, j) loses through its plus face; the neighbour gains
                rq[i, j] += cond - flux_q
                rv[0, i, j] -= m0
                rv[1, i, j] -= m1
                for a in range(2):
                    for b in range(2):
                        rF[a, b, i, j] -= fF[a, b]
                if not k_ghost:
                    rq[ii, jj] += flux_q - cond
                    rv[0, ii, jj] += m0
                    rv[1, ii, jj] += m1
                    for a in range(2):
                        for b in range(2):
                            rF[a, b, ii, jj] += fF[a, b]

    # pass 2b: stress divergence, stretching, relaxation, stress diffusion
    for i in range(n):
        ip, gxp = _nb(i, 1, n, periodic)
        im, gxm = _nb(i, -1, n, periodic)
        for j in range(n):
            jp, gyp = _nb(j, 1, n, periodic)
            jm, gym = _nb(j, -1, n, periodic)
            for a in range(2):
                rv[a, i, j] += (sig[a, 0, ip, j] - sig[a, 0, im, j]) * inv2h
                rv[a, i, j] += (sig[a, 1, i, jp] - sig[a, 1, i, jm]) * inv2h
            f11 = F[0, 0, i, j]
            f12 = F[0, 1, i, j]
            f21 = F[1, 0, i, j]
            f22 = F[1, 1, i, j]
            b11 = f11 * f11 + f12 * f12
            b12 = f11 * f21 + f12 * f22
            b22 = f21 * f21 + f22 * f22
            hd = 0.5 * delta[i, j]
            for a in range(2):
                for b in range(2):
                    stretch = L[a, 0, i, j] * F[0, b, i, j] + L[a, 1, i, j] * F[1, b, i, j]
                    ba0 = b11 if a == 0 else b12
                    ba1 = b12 if a == 0 else b22
                    bf = ba0 * F[0, b, i, j] + ba1 * F[1, b, i, j]
                    lap = (
                        F[a, b, ip, j] + F[a, b, im, j] + F[a, b, i, jp] + F[a, b, i, jm]
                        - 4.0 * F[a, b, i, j]
                    ) * invh2
                    rF[a, b, i, j] += stretch - hd * (bf - F[a, b, i, j]) + eps * lap
    return rv, rF, rq
