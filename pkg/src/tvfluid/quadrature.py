"""Adaptive Simpson quadrature, vectorized over many integrals at once.

All intervals that still need refinement are processed together as flat
arrays, so integrating one integrand over thousands of different upper limits
costs a handful of numpy passes per refinement level instead of a Python
recursion per integral.
"""

import numpy as np

from .errors import QuadratureFailure


def adaptive_simpson(func, a, b, tol=1e-10, max_levels=60, indexed=False, min_levels=5):
    """Integrate ``func`` from ``a`` to ``b`` elementwise.

    Parameters
    ----------
    func : callable
        Vectorized integrand, ``func(x) -> array`` of the same shape as x.
    a, b : float or array_like
        Integration limits; broadcast against each other.
    tol : float or array_like
        Absolute error target for each integral (broadcast like the limits).
    max_levels : int
        Maximum number of interval bisections along any branch.
    indexed : bool
        If true, ``func(x, idx)`` also receives the flat index of the
        integral each point belongs to, for integrands that differ per
        integral.
    min_levels : int
        Bisections applied before the error test may accept an interval;
        guards against a coarse estimate agreeing with its halves by
        coincidence.

    The local error test uses a quarter of the requested tolerance, since
    the Richardson estimate can understate the error of smooth integrands
    with a strongly varying scale.

    Notes
    -----
    Intervals narrower than ``min(1e-13 |b - a|, 1e-3 tol)`` are accepted as
    they are.  For a bounded integrand their contribution is far below the
    tolerance, and it lets integrands with a jump at an end point (such as
    z**lam for tiny lam) converge instead of exhausting the level budget.

    Returns
    -------
    float or ndarray
        Integral values with the broadcast shape of ``a`` and ``b``.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    shape = a.shape
    lo = a.ravel().copy()
    hi = b.ravel().copy()
    result = np.zeros(lo.size)

    owner = np.arange(lo.size)
    if indexed:
        f = func
    else:
        def f(x, _idx):
            return func(x)

    flo, fhi = f(lo, owner), f(hi, owner)
    mid = 0.5 * (lo + hi)
    fmid = f(mid, owner)
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    tol_arr = np.broadcast_to(np.asarray(tol, float), shape).ravel()
    eps = 0.25 * tol_arr
    min_width = np.minimum(1e-13 * np.abs(hi - lo), 1e-3 * tol_arr)

    for _level in range(max_levels + 1):
        if owner.size == 0:
            break
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm, owner), f(rm, owner)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - whole
        done = (np.abs(delta) <= 15.0 * eps) | (np.abs(hi - lo) <= min_width[owner])
        if _level < min_levels:
            done[:] = False
        if np.any(done):
            np.add.at(result, owner[done], left[done] + right[done] + delta[done] / 15.0)
        keep = ~done
        if not np.any(keep):
            owner = owner[keep]
            break
        # children: left halves then right halves
        owner = np.concatenate([owner[keep], owner[keep]])
        new_lo = np.concatenate([lo[keep], mid[keep]])
        new_hi = np.concatenate([mid[keep], hi[keep]])
        new_flo = np.concatenate([flo[keep], fmid[keep]])
        new_fhi = np.concatenate([fmid[keep], fhi[keep]])
        new_fmid = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        eps = np.concatenate([eps[keep], eps[keep]]) * 0.5
        lo, hi, flo, fhi, fmid = new_lo, new_hi, new_flo, new_fhi, new_fmid
        mid = 0.5 * (lo + hi)
    else:
        if owner.size:
            raise QuadratureFailure(
                f"adaptive Simpson did not reach tol={float(np.min(tol_arr)):g} within {max_levels} levels"
            )

    if shape == ():
        return float(result[0])
    return result.reshape(shape)
