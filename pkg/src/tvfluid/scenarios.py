"""Initial-data presets.

Every preset returns a :class:`~tvfluid.solver.State` whose velocity has been
projected onto the discretely divergence-free fields.
"""

import numpy as np

from .solver import make_state

TWO_PI = 2.0 * np.pi


def _finish(grid, v, F, theta, tol=1e-12):
    if v is not None:
        v, _ = grid.project_div_free(v, tol)
    return make_state(grid, v, F, theta)


def stationary(grid, theta=1.0):
    n = grid.n
    return make_state(grid, theta=np.full((n, n), float(theta)))


def pure_diffusion(grid, amplitude=0.1):
    """v = 0, F = I, theta = 1 + amplitude sin(2 pi x)."""
    x, _ = grid.centers()
    return make_state(grid, theta=1.0 + amplitude * np.sin(TWO_PI * x))


def shear(grid, amplitude=1.0):
    """Horizontal shear layer v = (amplitude sin(2 pi y), 0)."""
    _, y = grid.centers()
    v = np.stack([amplitude * np.sin(TWO_PI * y), np.zeros_like(y)])
    return _finish(grid, v, None, None)


def _random_modes(rng, x, y, kmax, amplitude, periodic):
    """Smooth random field built from low Fourier modes, normalised to max |.| = amplitude."""
    out = np.zeros_like(x)
    for kx in range(0, kmax + 1):
        for ky in range(0, kmax + 1):
            if kx == 0 and ky == 0:
                continue
            c = rng.normal(size=4) / (kx * kx + ky * ky)
            if periodic:
                ax, ay = TWO_PI * kx * x, TWO_PI * ky * y
                out += (c[0] * np.cos(ax) + c[1] * np.sin(ax)) * (c[2] * np.cos(ay) + c[3] * np.sin(ay))
            else:
                # cosines satisfy the mirror boundary condition
                out += c[0] * np.cos(np.pi * kx * x) * np.cos(np.pi * ky * y)
    peak = np.max(np.abs(out))
    return amplitude * out / peak if peak > 0 else out


def random_smooth(grid, seed=0, amplitude=0.5, kmax=3):
    """Random low-mode velocity (from a stream function), F and theta."""
    rng = np.random.default_rng(seed)
    x, y = grid.centers()
    per = grid.periodic
    if per:
        psi = _random_modes(rng, x, y, kmax, amplitude / (TWO_PI), True)
    else:
        bump = np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2
        psi = bump * _random_modes(rng, x, y, kmax, amplitude / (TWO_PI), False)
    v = np.stack([grid.ddx(psi, -1), -grid.ddx(psi, -2)])
    F = np.zeros((2, 2) + x.shape)
    for a in range(2):
        for b in range(2):
            F[a, b] = (1.0 if a == b else 0.0) + _random_modes(rng, x, y, kmax, 0.2 * amplitude, per)
    theta = 1.0 + _random_modes(rng, x, y, kmax, 0.5 * amplitude, per)
    return _finish(grid, v, F, theta)


def relaxation(grid, b0=2.0):
    """At rest with uniform B = diag(b0, 1)."""
    n = grid.n
    F = np.zeros((2, 2, n, n))
    F[0, 0] = np.sqrt(b0)
    F[1, 1] = 1.0
    return make_state(grid, F=F)


def wide_theta(grid, seed=0, amplitude=0.5, low=0.05, high=30.0):
    """Smooth random flow with a temperature ranging over [low, high].

    The temperature is low * (high/low) ** s with s in [0, 1] a smooth bump,
    so the cutoff of the runner has work to do at both ends.
    """
    state = random_smooth(grid, seed=seed, amplitude=amplitude)
    x, y = grid.centers()
    s = 0.5 * (1.0 + np.sin(TWO_PI * x) * np.sin(TWO_PI * y))
    state.theta = low * (high / low) ** s
    return state


def lowmode(grid, amplitude=0.2):
    """A few trigonometric modes in v, F and theta (periodic only).

    Chosen so that every field lies in the span of a small trigonometric
    basis; used to compare against the spectral Galerkin reference.
    """
    x, y = grid.centers()
    fields = lowmode_fields(amplitude)
    v = np.stack([fields["v"][0](x, y), fields["v"][1](x, y)])
    F = np.array([[fields["F"][a][b](x, y) for b in range(2)] for a in range(2)])
    theta = fields["theta"](x, y)
    return _finish(grid, v, F, theta)


def lowmode_fields(amplitude=0.2):
    """Callables (x, y) -> value for the lowmode preset."""
    a = amplitude
    c, s = np.cos, np.sin
    # stream function a/(2 pi) (sin 2 pi x sin 2 pi y + 0.5 cos 2 pi (x + 2 y))
    v = (
        lambda x, y: a * (s(TWO_PI * x) * c(TWO_PI * y) - s(TWO_PI * (x + 2 * y))),
        lambda x, y: a * (-c(TWO_PI * x) * s(TWO_PI * y) + 0.5 * s(TWO_PI * (x + 2 * y))),
    )
    F = (
        (lambda x, y: 1.0 + 0.5 * a * c(TWO_PI * x), lambda x, y: 0.25 * a * s(TWO_PI * y)),
        (lambda x, y: 0.25 * a * s(TWO_PI * (x - y)), lambda x, y: 1.0 - 0.5 * a * s(TWO_PI * y)),
    )
    theta = lambda x, y: 1.0 + 0.5 * a * c(TWO_PI * x) * c(TWO_PI * y)  # noqa: E731
    return {"v": v, "F": F, "theta": theta}


PRESETS = {
    "stationary": stationary,
    "pure_diffusion": pure_diffusion,
    "shear": shear,
    "random_smooth": random_smooth,
    "relaxation": relaxation,
    "wide_theta": wide_theta,
    "lowmode": lowmode,
}


def make_initial(name, grid, **params):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown initial-data preset '{name}'; choose from {sorted(PRESETS)}") from None
    if name == "lowmode" and not grid.periodic:
        raise ValueError("the lowmode preset needs a periodic grid")
    return factory(grid, **params)
