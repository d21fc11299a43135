"""Reference solutions computed without the package under test."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def _shoot(slope, q, length):
    """u(length) for u'' + u^(q-1) = 0, u(0) = 0, u'(0) = slope."""
    sol = solve_ivp(lambda x, y: [y[1], -np.abs(y[0]) ** (q - 2) * y[0]], (0.0, length),
                    [0.0, slope], rtol=1e-12, atol=1e-14, dense_output=True)
    return sol


@lru_cache(maxsize=None)
def lane_emden_1d(q=4.0, length=1.0):
    """Positive solution of u'' + u^(q-1) = 0 on (0, length), zero at both ends.

    Shooting on u'(0): the first zero of u moves left as the slope grows, so
    u(length) changes sign exactly once on the bracket below.
    Returns (slope, dense solution callable x -> u(x)).
    """
    def end(s):
        return _shoot(s, q, length).y[0, -1]

    lo, hi = 1.0, 2.0
    while end(hi) > 0:
        lo, hi = hi, 2 * hi
    s = brentq(end, lo, hi, xtol=1e-14, rtol=1e-14)
    sol = _shoot(s, q, length)
    return s, (lambda x: sol.sol(np.asarray(x, float))[0])


def lane_emden_1d_max(q=4.0, length=1.0):
    s, u = lane_emden_1d(q, length)
    return float(u(0.5 * length))


def plap_closed_form(x, p=3.0):
    """-(|u'|^(p-2) u')' = 1 on (-1, 1), u(+-1) = 0."""
    e = p / (p - 1)
    return (1 - np.abs(x) ** e) / e


def power_conjugate(t, p):
    """Complementary function of t^p/p."""
    pp = p / (p - 1)
    return np.asarray(t, float) ** pp / pp
