"""Young functions G, their derivatives, inverses, conjugates and structural checks.

Four families are supported::

    power         G(t) = scale * t**p / p
    plog          G(t) = t**p * log(1 + t)**alpha
    double_power  G(t) = t**p / p + t**q / q
    tabulated     g given on a strictly increasing table, G = integral of g

All evaluators are vectorised over numpy arrays.  Structural conditions are
verified on log-spaced sample grids and reported as numeric bands.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._roots import solve_increasing
from .errors import DegeneracyError, DomainError, RangeError

KINDS = ("power", "plog", "double_power", "tabulated")
DEFAULT_DOMAIN = (1e-3, 1e3)

# Lieberman ratios at t depend on g over (0, t]; sample this far below t_min
_LOWER_TAIL = 1e-9


class ExtrapolationWarning(UserWarning):
    """A tabulated Young function was evaluated outside its table."""


class RegularVariationWarning(UserWarning):
    """Deviation history of g(st)/g(s) is not monotonically shrinking."""


def log_grid(a, b, n):
    return np.logspace(math.log10(a), math.log10(b), int(n))


@dataclass(frozen=True, eq=False)
class YoungFunction:
    kind: str
    params: dict
    eval_domain: tuple = DEFAULT_DOMAIN

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Young function kind {self.kind!r}")
        a, b = (float(v) for v in self.eval_domain)
        if not 0 < a < b:
            raise ValueError(f"eval_domain must satisfy 0 < a < b, got {self.eval_domain}")
        object.__setattr__(self, "eval_domain", (a, b))
        need = {"power": ("p",), "plog": ("p", "alpha"),
                "double_power": ("p", "q"), "tabulated": ("t", "g")}[self.kind]
        missing = [k for k in need if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} Young function needs params {missing}")
        if self.kind != "tabulated":
            for k in need:
                if float(self.params[k]) <= (0 if k == "alpha" else 1):
                    raise ValueError(f"parameter {k}={self.params[k]} out of range")
        else:
            self._table  # validates

    # -- constructors -----------------------------------------------------
    @classmethod
    def power(cls, p, scale=1.0, eval_domain=DEFAULT_DOMAIN):
        return cls("power", {"p": float(p), "scale": float(scale)}, eval_domain)

    @classmethod
    def plog(cls, p, alpha, eval_domain=DEFAULT_DOMAIN):
        return cls("plog", {"p": float(p), "alpha": float(alpha)}, eval_domain)

    @classmethod
    def double_power(cls, p, q, eval_domain=DEFAULT_DOMAIN):
        return cls("double_power", {"p": float(p), "q": float(q)}, eval_domain)

    @classmethod
    def tabulated(cls, t, g, eval_domain=None):
        t = [float(v) for v in t]
        g = [float(v) for v in g]
        if eval_domain is None:
            eval_domain = (t[0], t[-1])
        return cls("tabulated", {"t": t, "g": g}, eval_domain)

    @classmethod
    def from_dict(cls, d):
        dom = d.get("eval_domain", DEFAULT_DOMAIN)
        if d["kind"] == "tabulated" and "eval_domain" not in d:
            dom = (d["params"]["t"][0], d["params"]["t"][-1])
        return cls(d["kind"], dict(d["params"]), tuple(dom))

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params),
                "eval_domain": list(self.eval_domain)}

    # -- tabulated machinery ---------------------------------------------
    @cached_property
    def _table(self):
        t = np.asarray(self.params["t"], dtype=float)
        g = np.asarray(self.params["g"], dtype=float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 3:
            raise ValueError("tabulated Young function needs >= 3 matching samples")
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("table abscissae must be positive and strictly increasing")
        if np.any(g <= 0) or np.any(np.diff(g) < 0):
            raise ValueError("tabulated g must be positive and nondecreasing")
        interp = PchipInterpolator(t, g, extrapolate=False)
        dg = interp.derivative()
        anti = interp.antiderivative()
        s0 = t[0] * float(dg(t[0])) / g[0]
        s1 = t[-1] * float(dg(t[-1])) / g[-1]
        G0 = g[0] * t[0] / (s0 + 1.0)
        G1 = G0 + float(anti(t[-1]) - anti(t[0]))
        return dict(t=t, g=g, interp=interp, dg=dg, anti=anti,
                    s0=s0, s1=s1, G0=G0, G1=G1)

    def _tab_eval(self, which, t):
        tb = self._table
        t0, t1 = tb["t"][0], tb["t"][-1]
        pos = t > 0
        if np.any(pos & (t < t0 / 10)) or np.any(t > 10 * t1):
            raise RangeError(
                f"tabulated Young function queried beyond 10x its table [{t0}, {t1}]")
        if np.any(pos & ((t < t0) | (t > t1))):
            warnings.warn("tabulated Young function extrapolated by power law",
                          ExtrapolationWarning, stacklevel=3)
        out = np.zeros_like(t)
        lo = pos & (t < t0)
        hi = t > t1
        mid = (t >= t0) & (t <= t1)
        g0, g1, s0, s1 = tb["g"][0], tb["g"][-1], tb["s0"], tb["s1"]
        if which == "G":
            out[mid] = tb["G0"] + tb["anti"](t[mid]) - tb["anti"](t0)
            out[lo] = tb["G0"] * (t[lo] / t0) ** (s0 + 1)
            out[hi] = tb["G1"] + g1 * t1 / (s1 + 1) * ((t[hi] / t1) ** (s1 + 1) - 1)
        elif which == "g":
            out[mid] = tb["interp"](t[mid])
            out[lo] = g0 * (t[lo] / t0) ** s0
            out[hi] = g1 * (t[hi] / t1) ** s1
        else:
            out[mid] = tb["dg"](t[mid])
            out[lo] = g0 * s0 / t0 * (t[lo] / t0) ** (s0 - 1)
            out[hi] = g1 * s1 / t1 * (t[hi] / t1) ** (s1 - 1)
        return out

    # -- evaluators (no domain checks; t >= 0 arrays) ---------------------
    def _eval(self, which, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        P = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "power":
                p, c = float(P["p"]), float(P.get("scale", 1.0))
                if which == "G":
                    v = c * t ** p / p
                elif which == "g":
                    v = c * t ** (p - 1)
                else:
                    v = c * (p - 1) * t ** (p - 2)
            elif self.kind == "double_power":
                p, q = float(P["p"]), float(P["q"])
                if which == "G":
                    v = t ** p / p + t ** q / q
                elif which == "g":
                    v = t ** (p - 1) + t ** (q - 1)
                else:
                    v = (p - 1) * t ** (p - 2) + (q - 1) * t ** (q - 2)
            elif self.kind == "plog":
                p, a = float(P["p"]), float(P["alpha"])
                L = np.log1p(t)
                if which == "G":
                    v = t ** p * L ** a
                elif which == "g":
                    v = p * t ** (p - 1) * L ** a + a * t ** p * L ** (a - 1) / (1 + t)
                else:
                    v = (p * (p - 1) * t ** (p - 2) * L ** a
                         + 2 * a * p * t ** (p - 1) * L ** (a - 1) / (1 + t)
                         + a * t ** p * ((a - 1) * L ** (a - 2) - L ** (a - 1)) / (1 + t) ** 2)
                v = np.where(t == 0, 0.0 if which != "gprime" else v, v)
            else:
                v = self._tab_eval(which, t)
        return float(v[0]) if scalar else v

    def G(self, t):
        return self._eval("G", t)

    def g(self, t):
        return self._eval("g", t)

    def gprime(self, t):
        return self._eval("gprime", t)

    @property
    def omega_cap(self):
        """Upper end of the numeric domain used by conjugation."""
        if self.kind == "tabulated":
            return 10 * self._table["t"][-1]
        return self.eval_domain[1] * 1e6

    @property
    def lower_limit(self):
        """Smallest positive argument that may be evaluated safely."""
        if self.kind == "tabulated":
            return self._table["t"][0] / 10
        return 0.0

    def sample_grid(self, n=400):
        return log_grid(*self.eval_domain, n)


# ---------------------------------------------------------------------------
# operations

def _check_nonneg(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be nonnegative")
    return arr


def evaluate(yf: YoungFunction, which: str, t):
    """Return G(t), g(t) or g'(t) (``which`` in {"G", "g", "gprime"})."""
    if which not in ("G", "g", "gprime"):
        raise ValueError(f"which must be G, g or gprime, not {which!r}")
    _check_nonneg(t)
    return yf._eval(which, t)


def inverse_G(yf: YoungFunction, y):
    """G^{-1}(y) by bracketing, bisection and a Newton polish."""
    y = _check_nonneg(y, "y")
    return solve_increasing(yf.G, y, dfun=yf.g)


def complementary(yf: YoungFunction, t):
    """Conjugate function sup_w {t w - G(w)} evaluated at the maximiser g(w) = t."""
    t = _check_nonneg(t)
    w = solve_increasing(yf.g, t, dfun=yf.gprime, x_max=yf.omega_cap)
    return t * w - yf.G(w)


def _ratios(yf, t):
    G, g, gp = yf.G(t), yf.g(t), yf.gprime(t)
    if np.any(g <= 0) or np.any(G <= 0):
        bad = t[(g <= 0) | (G <= 0)][0]
        raise DegeneracyError(f"g or G vanishes at t={bad:g}")
    return 1.0 + gp * t / g, t * g / G


def lieberman_exponents(yf: YoungFunction, n=400):
    """Sampled Lieberman bands.

    Returns ``(p_minus_hat, p_plus_hat, ratio2_min, ratio2_max)`` where the
    first pair bounds ``1 + t g'(t)/g(t)`` and the second pair bounds
    ``t g(t)/G(t)``.  Since ``t g/G`` at t averages the first ratio over
    (0, t], the first band is sampled down to ``t_min * 1e-9`` as well.
    """
    if n < 200:
        raise ValueError("need at least 200 samples")
    a, b = yf.eval_domain
    t = log_grid(a, b, n)
    low = max(a * _LOWER_TAIL, yf.lower_limit)
    tail = log_grid(low, a, max(20, int(n * 0.25)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        r1, r2 = _ratios(yf, t)
        r1_tail, _ = _ratios(yf, tail)
    r1 = np.concatenate([r1_tail, r1])
    return float(r1.min()), float(r1.max()), float(r2.min()), float(r2.max())


def delta2_constant(yf: YoungFunction, n=400):
    """max over the sample grid of G(2t)/G(t)."""
    t = yf.sample_grid(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        Gt = yf.G(t)
        if np.any(Gt <= 0):
            raise DegeneracyError("G vanishes on the sample grid")
        return float(np.max(yf.G(2 * t) / Gt))


DEFAULT_S_LIST = tuple(10.0 ** k for k in range(1, 7))


def regvar_exponent(yf: YoungFunction, s_list=DEFAULT_S_LIST, t_grid=None):
    """Exponent at infinity from the quotients g(s t)/g(s).

    For every s the least-squares slope of log(g(st)/g(s)) against log t
    estimates p - 1.  Returns ``(p_hat, deviation_history)`` with p_hat taken
    from the largest s and the sup-deviation |g(st)/g(s) - t^(p_hat-1)| per s.
    Warns with RegularVariationWarning when successive slope changes grow.
    """
    s_list = np.asarray(s_list, dtype=float)
    if np.any(np.diff(s_list) <= 0):
        raise ValueError("s_list must be increasing")
    t = np.asarray(t_grid if t_grid is not None else log_grid(1e-2, 2.0, 60), float)
    if np.any(t <= 0):
        raise ValueError("t_grid must lie in (0, T]")
    lt = np.log(t)
    quotients, slopes = [], []
    for s in s_list:
        qt = yf.g(s * t) / yf.g(s)
        quotients.append(qt)
        slopes.append(np.polyfit(lt, np.log(qt), 1)[0])
    p_hat = 1.0 + float(slopes[-1])
    dev = [float(np.max(np.abs(qt - t ** (p_hat - 1)))) for qt in quotients]
    # regular variation makes the slope estimates settle: their increments shrink
    inc = np.abs(np.diff(slopes))
    if np.any(np.diff(inc) > 1e-10):
        warnings.warn("slope estimates do not settle: g may not be regularly varying",
                      RegularVariationWarning, stacklevel=2)
    return p_hat, dev


def phi_implicit(yf: YoungFunction, f: Callable, t):
    """Solve c * g(t c) = f(t) for c > 0 (the blow-up scale function)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    ft = np.asarray(f(t), dtype=float)
    if np.any(ft <= 0) or not np.all(np.isfinite(ft)):
        raise DomainError("f(t) must be positive and finite")
    scalar = t.ndim == 0
    tt, ff = np.atleast_1d(t), np.atleast_1d(ft)
    c = solve_increasing(lambda c: c * yf.g(tt * c), ff,
                         dfun=lambda c: yf.g(tt * c) + c * tt * yf.gprime(tt * c))
    return float(c[0]) if scalar else c


def varphi(yf: YoungFunction, f: Callable, t):
    """G^{-1}(t f(t)) / t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    ft = np.asarray(f(t), dtype=float)
    if np.any(ft <= 0):
        raise DomainError("f(t) must be positive")
    return inverse_G(yf, t * ft) / t


def phi_ratio_band(yf: YoungFunction, f: Callable, t_grid):
    """Empirical (k_minus, k_plus) = (min, max) of phi/varphi over ``t_grid``."""
    t = np.asarray(t_grid, dtype=float)
    r = phi_implicit(yf, f, t) / varphi(yf, f, t)
    return float(np.min(r)), float(np.max(r))


def young_inequality_constant(yf: YoungFunction, n=200):
    """max over a (t, s) grid of g(t) s / (G(t) + G(s))."""
    t = yf.sample_grid(n)
    T, S = np.meshgrid(t, t, indexing="ij")
    ratio = yf.g(T) * S / (yf.G(T) + yf.G(S))
    return float(np.max(ratio))


@dataclass
class ExponentReport:
    p_minus_hat: float
    p_plus_hat: float
    ratio2_min: float
    ratio2_max: float
    delta2_constant: float
    regvar_p_hat: float
    sample_range: tuple
    n_samples: int
    regvar_deviation: list = field(default_factory=list)

    def to_dict(self):
        return {
            "kind": "exponent_report",
            "p_minus_hat": self.p_minus_hat,
            "p_plus_hat": self.p_plus_hat,
            "ratio2_min": self.ratio2_min,
            "ratio2_max": self.ratio2_max,
            "delta2_constant": self.delta2_constant,
            "regvar_p_hat": self.regvar_p_hat,
            "t_min": self.sample_range[0],
            "t_max": self.sample_range[1],
            "n_samples": self.n_samples,
        }


def exponent_report(yf: YoungFunction, n=400, s_list: Sequence = DEFAULT_S_LIST):
    pm, pp, r2m, r2p = lieberman_exponents(yf, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegularVariationWarning)
        warnings.simplefilter("ignore", ExtrapolationWarning)
        if yf.kind == "tabulated":
            # stay within the 10x extrapolation window of the table
            top = yf.omega_cap / 2.0
            s_list = log_grid(10 * yf._table["t"][0], top, 6)
        p_hat, dev = regvar_exponent(yf, s_list)
    return ExponentReport(pm, pp, r2m, r2p, delta2_constant(yf, n), p_hat,
                          yf.eval_domain, n, dev)
