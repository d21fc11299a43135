"""Vectorised bracket-and-bisect root finding for increasing functions."""
import numpy as np

from .errors import SaturationError

_MAX_DOUBLINGS = 2100


def solve_increasing(fun, target, dfun=None, x0=1.0, x_max=np.inf, rtol=1e-15):
    """Solve ``fun(x) = target`` for x >= 0 with ``fun`` strictly increasing.

    ``fun`` must accept and return arrays and satisfy ``fun(0) <= 0 < target``.
    Brackets by doubling/halving from ``x0``, bisects to ``rtol`` and finishes
    with one Newton step (kept only if it stays inside the bracket).

    Raises SaturationError if the root lies beyond ``x_max`` or overflows.
    """
    target = np.asarray(target, dtype=float)
    scalar = target.ndim == 0
    y = np.atleast_1d(target).astype(float)
    out = np.zeros_like(y)
    live = y > 0
    if not live.any():
        return float(out[0]) if scalar else out
    yl = y[live]

    hi = np.full_like(yl, float(x0))
    lo = np.zeros_like(yl)
    with np.errstate(over="ignore", invalid="ignore"):
        fh = fun(hi)
        grow = fh < yl
        for _ in range(_MAX_DOUBLINGS):
            if not grow.any():
                break
            lo[grow] = hi[grow]
            hi[grow] *= 2.0
            if np.any(hi[grow] > x_max) or not np.all(np.isfinite(hi[grow])):
                raise SaturationError(
                    "root exceeds numeric domain (x_max=%g)" % x_max)
            fh = fun(hi)
            grow = fh < yl
        else:
            raise SaturationError("bracket expansion did not terminate")

        # shrink from below where the initial guess was already too large
        shrink = (lo == 0) & (hi > 0)
        cand = hi.copy()
        for _ in range(_MAX_DOUBLINGS):
            if not shrink.any():
                break
            cand[shrink] *= 0.5
            fc = fun(cand)
            below = shrink & (fc < yl)
            lo[below] = cand[below]
            moved = shrink & ~below
            hi[moved] = cand[moved]
            shrink = moved & (cand > 1e-300)

        for _ in range(400):
            mid = 0.5 * (lo + hi)
            fm = fun(mid)
            up = fm < yl
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.all(hi - lo <= rtol * hi):
                break

        x = 0.5 * (lo + hi)
        if dfun is not None:
            d = dfun(x)
            step = np.where(d > 0, (fun(x) - yl) / np.where(d > 0, d, 1.0), 0.0)
            xn = x - step
            ok = np.isfinite(xn) & (xn >= lo) & (xn <= hi)
            x = np.where(ok, xn, x)
    out[live] = x
    return float(out[0]) if scalar else out
