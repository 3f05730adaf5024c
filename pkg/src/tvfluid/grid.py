"""Uniform cell-centred mesh on the unit square with collocated fields.

Array layout: scalars are ``(n, n)`` indexed ``[ix, iy]`` with cell centres at
``((ix + 1/2) h, (iy + 1/2) h)``; vectors are ``(2, n, n)``; 2x2 tensors are
``(2, 2, n, n)``.  Spatial derivatives always act on the last two axes.

Boundary handling uses one ghost layer whose value is ``parity * interior``:
``parity=+1`` is the homogeneous Neumann mirror (temperature, F, pressure,
stress), ``parity=-1`` the zero-Dirichlet reflection (velocity), and
``parity=0`` a zero ghost.  The centred difference with odd ghosts is exactly
minus the transpose of the centred difference with even ghosts, which keeps
the discrete projection an orthogonal projection in walls mode too.
"""

from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import PoissonNoConvergence

VELOCITY = -1
NEUMANN = 1
ZERO = 0


class BC(str, Enum):
    PERIODIC = "periodic"
    WALLS = "walls"


@dataclass(frozen=True)
class Grid:
    n: int
    bc: BC = BC.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "bc", BC(self.bc))
        if self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def periodic(self):
        return self.bc is BC.PERIODIC

    def centers(self):
        """Cell-centre coordinates ``(x, y)``, each of shape ``(n, n)``."""
        c = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(c, c, indexing="ij")

    # -- neighbours -------------------------------------------------------

    def shift(self, a, axis, step, parity=NEUMANN):
        """Value at the neighbour ``i + step`` (step = +-1) along ``axis``."""
        out = np.empty_like(a)
        if axis == -2:
            if step > 0:
                out[..., :-1, :] = a[..., 1:, :]
                out[..., -1, :] = a[..., 0, :] if self.periodic else parity * a[..., -1, :]
            else:
                out[..., 1:, :] = a[..., :-1, :]
                out[..., 0, :] = a[..., -1, :] if self.periodic else parity * a[..., 0, :]
        else:
            if step > 0:
                out[..., :-1] = a[..., 1:]
                out[..., -1] = a[..., 0] if self.periodic else parity * a[..., -1]
            else:
                out[..., 1:] = a[..., :-1]
                out[..., 0] = a[..., -1] if self.periodic else parity * a[..., 0]
        return out

    # -- difference operators -------------------------------------------

    def ddx(self, a, axis, parity=NEUMANN):
        """Centred first difference along ``axis`` (-2 for x, -1 for y)."""
        return (self.shift(a, axis, 1, parity) - self.shift(a, axis, -1, parity)) / (2.0 * self.h)

    def grad(self, s, parity=NEUMANN):
        return np.stack([self.ddx(s, -2, parity), self.ddx(s, -1, parity)])

    def div(self, v, parity=VELOCITY):
        return self.ddx(v[0], -2, parity) + self.ddx(v[1], -1, parity)

    def grad_vector(self, v):
        """Velocity gradient ``L[a, b] = d v_a / d x_b``."""
        gx = self.ddx(v, -2, VELOCITY)
        gy = self.ddx(v, -1, VELOCITY)
        return np.stack([gx, gy], axis=1)

    def div_tensor(self, S, parity=NEUMANN):
        """Row divergence ``(div S)_a = sum_b d S_ab / d x_b``."""
        return self.ddx(S[:, 0], -2, parity) + self.ddx(S[:, 1], -1, parity)

    def laplacian(self, s, parity=NEUMANN):
        """Compact five-point Laplacian (component-wise for vectors/tensors)."""
        out = -4.0 * s
        for axis in (-2, -1):
            out = out + self.shift(s, axis, 1, parity) + self.shift(s, axis, -1, parity)
        return out / self.h**2

    def diffuse(self, s, coef, parity=NEUMANN):
        """Flux-form ``div(coef grad s)`` with arithmetic face coefficients."""
        if np.ndim(coef) == 0:
            return coef * self.laplacian(s, parity)
        out = 0.0
        for axis in (-2, -1):
            cp = 0.5 * (coef + self.shift(coef, axis, 1, NEUMANN))
            fp = cp * (self.shift(s, axis, 1, parity) - s)
            out = out + fp - self.shift(fp, axis, -1, ZERO)
        return out / self.h**2

    def face_velocity(self, v, axis):
        """Normal velocity on the face ``i + 1/2`` (zero on walls)."""
        comp = v[0] if axis == -2 else v[1]
        return 0.5 * (comp + self.shift(comp, axis, 1, VELOCITY))

    def flux_divergence(self, flux_plus, axis):
        """``(flux[i+1/2] - flux[i-1/2]) / h`` given fluxes on the plus faces."""
        return (flux_plus - self.shift(flux_plus, axis, -1, ZERO)) / self.h

    def advect(self, q, v, face_state=None):
        """Conservative ``div(q v)`` with face-averaged velocity.

        ``face_state(q_left, q_right)`` returns the transported state on a face;
        the default is the arithmetic mean.  With the mean state, summing
        ``q * advect(q, v)`` over the grid gives ``sum |q|^2/2 div v``.
        """
        out = 0.0
        for axis in (-2, -1):
            U = self.face_velocity(v, axis)
            right = self.shift(q, axis, 1, NEUMANN)
            qf = 0.5 * (q + right) if face_state is None else face_state(q, right)
            out = out + self.flux_divergence(U * qf, axis)
        return out

    def boundary_flux(self, v):
        """Net outward face-normal flux through the domain boundary."""
        if self.periodic:
            return 0.0
        h = self.h
        ux = self.face_velocity(v, -2)
        uy = self.face_velocity(v, -1)
        left = 0.5 * (v[0][0] + self.shift(v[0], -2, -1, VELOCITY)[0])
        bottom = 0.5 * (v[1][:, 0] + self.shift(v[1], -1, -1, VELOCITY)[:, 0])
        return h * (ux[-1].sum() - left.sum() + uy[:, -1].sum() - bottom.sum())

    def integrate(self, s):
        return self.h**2 * float(np.sum(s))

    # -- projection --------------------------------------------------------

    def neg_poisson(self, p):
        """``-div grad p`` with the matched wide stencil (positive semidefinite)."""
        return -self.div(self.grad(p, NEUMANN), VELOCITY)

    @cached_property
    def _spectral_inverse(self):
        n = self.n
        sx = np.sin(2.0 * np.pi * np.arange(n) / n) ** 2
        sy = np.sin(2.0 * np.pi * np.arange(n // 2 + 1) / n) ** 2
        lam = (sx[:, None] + sy[None, :]) / self.h**2
        inv = np.zeros_like(lam)
        nz = lam > 1e-9 / self.h**2
        inv[nz] = 1.0 / lam[nz]
        return inv

    def preconditioner(self, kind="auto"):
        """Return a callable approximating the pseudo-inverse of ``neg_poisson``."""
        if kind == "auto":
            kind = "spectral" if self.periodic else "jacobi"
        if kind == "jacobi":
            # every column of the wide-stencil gradient has two entries of size 1/(2h)
            # per direction, in both boundary modes
            diag = 1.0 / self.h**2
            return lambda r: r / diag
        if kind == "spectral":
            if not self.periodic:
                raise ValueError("spectral preconditioner needs a periodic grid")
            inv = self._spectral_inverse
            return lambda r: np.fft.irfft2(np.fft.rfft2(r) * inv, s=r.shape)
        raise ValueError(f"unknown preconditioner '{kind}'")

    def solve_poisson(self, rhs, tol=1e-10, maxiter=None, precond="auto"):
        """Preconditioned conjugate gradients for ``-div grad p = rhs``.

        Stops when ``max|residual| <= tol * max(1, max|rhs|)``.  Returns the
        zero-mean solution and the iteration count.
        """
        maxiter = 10 * self.n**2 if maxiter is None else maxiter
        M = self.preconditioner(precond)
        b = np.asarray(rhs, float)
        if self.periodic:
            b = b - b.mean()
        thresh = tol * max(1.0, float(np.max(np.abs(b))))
        p = np.zeros_like(b)
        r = b.copy()
        if np.max(np.abs(r)) <= thresh:
            return p, 0
        z = M(r)
        d = z.copy()
        rz = float(np.vdot(r, z))
        for it in range(1, maxiter + 1):
            Ad = self.neg_poisson(d)
            dAd = float(np.vdot(d, Ad))
            if dAd <= 0.0:
                break
            alpha = rz / dAd
            p += alpha * d
            r -= alpha * Ad
            if np.max(np.abs(r)) <= thresh:
                return p - p.mean(), it
            z = M(r)
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
        raise PoissonNoConvergence(
            f"pressure solve did not reach tol={tol:g} in {maxiter} iterations "
            f"(residual {np.max(np.abs(r)):.3e})"
        )

    def project_div_free(self, v, tol=1e-10, precond="auto"):
        """Remove the discrete gradient part of ``v``; returns ``(v_new, p)``."""
        b = self.div(v, VELOCITY)
        p, _ = self.solve_poisson(-b, tol=tol, precond=precond)
        return v - self.grad(p, NEUMANN), p


# -- snapshots -------------------------------------------------------------

def _to_rowmajor(values):
    values = np.asarray(values, float)
    if values.ndim == 2:
        return values
    n = values.shape[-1]
    return np.moveaxis(values.reshape(-1, n, n), 0, -1)


def write_snapshot(path, kind, time, values):
    """Write ``TVS1 <kind> <n> <time>`` then little-endian float64 values.

    Values are cell-major (row-major over ``[ix, iy]``) with the components of
    vectors and tensors innermost; tensors store a11, a12, a21, a22.
    """
    data = _to_rowmajor(values)
    n = data.shape[0]
    header = f"TVS1 {kind} {n} {time!r}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return Path(path)


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(kind, n, time, values)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "TVS1":
            raise ValueError(f"{path}: not a TVS1 snapshot")
        kind, n, time = header[1], int(header[2]), float(header[3])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    ncomp = raw.size // (n * n)
    if ncomp * n * n != raw.size or ncomp not in (1, 2, 4):
        raise ValueError(f"{path}: payload size {raw.size} does not match n={n}")
    values = raw.reshape(n, n) if ncomp == 1 else raw.reshape(n, n, ncomp)
    return kind, n, time, values


def write_pgm(path, s):
    """8-bit min-max normalised greyscale preview of a scalar field."""
    s = np.asarray(s, float)
    lo, hi = float(s.min()), float(s.max())
    scaled = np.zeros_like(s) if hi <= lo else (s - lo) / (hi - lo)
    img = np.round(255 * scaled.T[::-1]).astype(np.uint8)  # y up
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())
    return Path(path)

