"""Nonlinear sources B(x, t, p) and report-only validators of their structural conditions.

Sources are vectorised: ``x`` has shape (n, d), ``t`` shape (n,), ``p`` shape
(n, d).  The composite family is

    B(x, t, p) = A * b(x) * f(t) + B0 * f0(t) + C * h(|p|)

with f, f0, h drawn from a few scalar laws.  Every ``check_*`` function returns
a :class:`ConditionReport` and never raises on a failed condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .young import YoungFunction, inverse_G, log_grid

CONDITION_IDS = ("growth", "fG", "eti1", "limitB", "positivity", "superlinearity",
                 "subcritical", "lieberman_B")


# ---------------------------------------------------------------------------
# scalar laws

@dataclass(frozen=True)
class ScalarLaw:
    """Nonnegative function of t >= 0; ``power`` is (t+)**exponent."""

    kind: str = "power"
    exponent: float = 1.0
    value: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return np.maximum(t, 0.0) ** self.exponent
        if self.kind == "exp":
            return np.exp(t)
        if self.kind == "const":
            return np.full_like(t, self.value)
        if self.kind == "zero":
            return np.zeros_like(t)
        raise ValueError(f"unknown law {self.kind!r}")

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            e = self.exponent
            if e == 0:
                return np.zeros_like(t)
            with np.errstate(divide="ignore"):
                d = e * np.maximum(t, 0.0) ** (e - 1)
            return np.where(t > 0, d, 0.0 if e >= 1 else d)
        if self.kind == "exp":
            return np.exp(t)
        return np.zeros_like(t)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "power" and self.exponent > 0:
            return y ** (1.0 / self.exponent)
        if self.kind == "exp":
            return np.log(y)
        raise ValueError(f"{self.kind} law is not invertible")

    def to_dict(self, role="f"):
        if self.kind == "power":
            if role in ("f", "f0"):
                return {"kind": "power", "q": self.exponent + 1.0}
            return {"kind": "power", "r": self.exponent}
        if self.kind == "const":
            return {"kind": "const", "value": self.value}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d, role="f"):
        if d is None:
            return cls("zero")
        if isinstance(d, (int, float)):
            return cls("const", value=float(d))
        kind = d.get("kind", "power")
        if kind == "power":
            if "exponent" in d:
                e = float(d["exponent"])
            elif "q" in d:
                e = float(d["q"]) - 1.0
            else:
                e = float(d["r"])
            return cls("power", exponent=e)
        if kind == "const":
            return cls("const", value=float(d.get("value", 1.0)))
        return cls(kind)


ZERO = ScalarLaw("zero")

_B_PROFILES = {
    "1": lambda x: np.ones(len(x)),
    "1+x1": lambda x: 1.0 + x[:, 0],
}


def _profile(b):
    if callable(b):
        return b
    if isinstance(b, (int, float)):
        return lambda x, c=float(b): np.full(len(x), c)
    if b in _B_PROFILES:
        return _B_PROFILES[b]
    raise ValueError(f"unknown profile b={b!r}")


# ---------------------------------------------------------------------------
# source term

@dataclass(frozen=True, eq=False)
class SourceTerm:
    evaluate: Callable
    f: Callable
    q: float
    h: Callable = ZERO
    f0: Callable | None = None
    b: Callable = _B_PROFILES["1"]
    K: float = 1.0
    L: float = 0.0
    M0: float = 10.0
    dt: Callable | None = None
    dp: Callable | None = None
    spec: dict | None = None

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("limit exponent q must exceed 1")
        if not self.K > 0:
            raise ValueError("growth constant K must be positive")

    def __call__(self, x, t, p):
        x, t, p = _as_points(x, t, p)
        return np.asarray(self.evaluate(x, t, p), dtype=float)

    def to_dict(self):
        if self.spec is None:
            raise ValueError("only composite sources are serialisable")
        return dict(self.spec)


def _as_points(x, t, p):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = np.full((t.size, 1), float(x))
    elif x.ndim == 1:
        x = x[:, None] if x.size == t.size else np.tile(x, (t.size, 1))
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = np.zeros((t.size, x.shape[1])) + float(p)
    elif p.ndim == 1:
        p = p[:, None] if p.size == t.size else np.tile(p, (t.size, 1))
    return x, t, p


def composite(A=1.0, f=None, B0=0.0, f0=None, C=0.0, h=None, b="1", K=1.0, L=0.0,
              M0=10.0, q=None):
    """B = A b(x) f(t) + B0 f0(t) + C h(|p|); laws as ScalarLaw or JSON dicts."""
    f = f if isinstance(f, ScalarLaw) else ScalarLaw.from_dict(f or {"q": 2.0}, "f")
    f0 = f0 if isinstance(f0, ScalarLaw) or f0 is None else ScalarLaw.from_dict(f0, "f0")
    h = h if isinstance(h, ScalarLaw) or h is None else ScalarLaw.from_dict(h, "h")
    f0 = f0 or ZERO
    h = h or ZERO
    bfun = _profile(b)
    if q is None:
        q = f.exponent + 1.0 if f.kind == "power" else 2.0

    def evaluate(x, t, p):
        return A * bfun(x) * f(t) + B0 * f0(t) + C * h(np.linalg.norm(p, axis=1))

    def dt(x, t, p):
        return A * bfun(x) * f.deriv(t) + B0 * f0.deriv(t)

    def dp(x, t, p):
        r = np.linalg.norm(p, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(r > 0, C * h.deriv(r) / np.where(r > 0, r, 1.0), 0.0)
        return s[:, None] * p

    spec = {"A": A, "f": f.to_dict("f"), "B0": B0, "f0": f0.to_dict("f0"), "C": C,
            "h": h.to_dict("h"), "b": b if isinstance(b, (str, int, float)) else "custom",
            "K": K, "L": L, "M0": M0, "q": q}
    return SourceTerm(evaluate, f, float(q), h=h, f0=f0 if f0.kind != "zero" else None,
                      b=bfun, K=K, L=L, M0=M0, dt=dt, dp=dp, spec=spec)


def from_dict(d: dict) -> SourceTerm:
    d = dict(d)
    return composite(A=float(d.get("A", 1.0)), f=d.get("f"), B0=float(d.get("B0", 0.0)),
                     f0=d.get("f0"), C=float(d.get("C", 0.0)), h=d.get("h"),
                     b=d.get("b", "1"), K=float(d.get("K", 1.0)),
                     L=float(d.get("L", 0.0)), M0=float(d.get("M0", 10.0)),
                     q=d.get("q"))


def lane_emden(q, L=0.0, K=1.0, M0=10.0, b="1"):
    """Pure power source B = b(x) (t+)^(q-1)."""
    return composite(A=1.0, f={"q": q}, b=b, K=K, L=L, M0=M0, q=q)


# ---------------------------------------------------------------------------
# reports

@dataclass
class ConditionReport:
    condition_id: str
    passed: bool
    witness: dict | None = None
    details: str = ""
    data: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.condition_id not in CONDITION_IDS:
            raise ValueError(f"unknown condition id {self.condition_id!r}")
        if not self.passed and self.witness is None:
            raise ValueError("a failed condition must carry a witness")

    def to_dict(self):
        return {"kind": "condition_report", "condition_id": self.condition_id,
                "passed": bool(self.passed), "witness": self.witness,
                "details": self.details, "data": self.data, "warnings": list(self.warnings)}


def _default_x(x_samples):
    if x_samples is None:
        return np.array([[0.0], [0.25], [0.5], [0.75], [1.0]])
    x = np.asarray(x_samples, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _grid_points(x, t, pmag):
    """Cartesian product of x rows, t values and |p| along the first axis."""
    X = np.repeat(x, len(t) * len(pmag), axis=0)
    T = np.tile(np.repeat(t, len(pmag)), len(x))
    Pm = np.tile(pmag, len(x) * len(t))
    P = np.zeros_like(X)
    P[:, 0] = Pm
    return X, T, P


def _witness(X, T, P, i, **extra):
    w = {"x": X[i].tolist(), "t": float(T[i]), "p": float(np.linalg.norm(P[i]))}
    w.update(extra)
    return w


def check_growth(st: SourceTerm, yf: YoungFunction, x_samples=None, nt=201, n_p=61,
                 p_max=1e3):
    """Estimate K from |B| <= K (1 + f(|t|) + h(|p|)) on |t| <= M0, |p| <= p_max."""
    x = _default_x(x_samples)
    t = np.linspace(-st.M0, st.M0, nt)
    pm = np.concatenate([[0.0], log_grid(1e-3, p_max, n_p)])
    X, T, P = _grid_points(x, t, pm)
    with np.errstate(over="ignore", invalid="ignore"):
        B = np.abs(st(X, T, P))
        pn = P[:, 0]
        r1 = B / (1 + st.f(np.abs(T)) + st.h(pn))
        r2 = B / (1 + yf.g(pn) * pn)
    k1, k2 = float(np.max(r1)), float(np.max(r2))
    finite = math.isfinite(k1) and math.isfinite(k2)
    passed = finite and k1 <= st.K
    i = int(np.nanargmax(r1)) if np.isfinite(r1).any() else 0
    rep = ConditionReport(
        "growth", passed,
        None if passed else _witness(X, T, P, i, ratio=k1),
        f"K_hat={k1:.6g} (declared K={st.K:g}); K_hat_lieberman={k2:.6g}",
        {"K_hat": k1, "K_hat_lieberman": k2, "M0": st.M0})
    return rep


def check_lieberman_bound(st: SourceTerm, yf: YoungFunction, x_samples=None, nt=201,
                          n_p=61, p_max=1e3):
    """Regularity hypothesis |B| <= K (1 + g(|p|)|p|) for |t| <= M0 (|p| read as a norm)."""
    g = check_growth(st, yf, x_samples, nt, n_p, p_max)
    k2 = g.data["K_hat_lieberman"]
    passed = math.isfinite(k2) and k2 <= st.K
    witness = None if passed else {"K_hat_lieberman": k2, "K": st.K}
    return ConditionReport("lieberman_B", passed, witness,
                           f"K_hat_lieberman={k2:.6g} on |t| <= {st.M0:g}",
                           {"K_hat_lieberman": k2})


def check_fG(st: SourceTerm, yf: YoungFunction, C_list, t_grid=None):
    """For each C, the threshold t0(C) after which t f(t) >= G(C t) on the grid."""
    t = np.asarray(t_grid if t_grid is not None else log_grid(1e-6, 1e6, 2401), float)
    thresholds, failed = [], None
    for C in C_list:
        if C <= 0:
            raise ValueError("C values must be positive")
        viol = t * st.f(t) < yf.G(C * t)
        t0 = float(t[viol].max()) if viol.any() else 0.0
        thresholds.append(t0)
        if viol[-1] and failed is None:
            failed = {"C": float(C), "t": float(t[-1])}
    passed = failed is None
    return ConditionReport("fG", passed, failed,
                           "t0(C) = " + ", ".join(f"{c:g}:{v:.4g}" for c, v in zip(C_list, thresholds)),
                           {"C": [float(c) for c in C_list], "t0": thresholds})


def check_eti1(st: SourceTerm, yf: YoungFunction, s0=1.0, s_grid=None, t_grid=None,
               rtol=1e-9, tail=10):
    """Estimate C with h(G^-1(s f(s)) t) / f(s) <= C (1 + G(t)) for s > s0."""
    s = np.asarray(s_grid if s_grid is not None else s0 * log_grid(1.0 + 1e-9, 1e6, 61), float)
    t = np.asarray(t_grid if t_grid is not None
                   else np.concatenate([[0.0], log_grid(1e-3, 1e2, 100)]), float)
    warn = []
    with np.errstate(over="ignore", invalid="ignore"):
        fs = st.f(s)
        arg = inverse_G(yf, s * fs)
        R = st.h(np.outer(arg, t)) / (fs[:, None] * (1 + yf.G(t))[None, :])
    ok = np.all(np.isfinite(R), axis=1)
    if not ok.all():
        warn.append(f"saturation: {int((~ok).sum())} s values overflowed and were dropped")
    Cs = R[ok].max(axis=1)
    if Cs.size == 0:
        return ConditionReport("eti1", False, {"s": float(s[0])}, "all samples saturated",
                               warnings=warn)
    C_hat = float(Cs.max())
    tail_c = Cs[-tail:]
    stable = bool(np.all(np.diff(tail_c) <= rtol * max(C_hat, 1e-300)))
    passed = math.isfinite(C_hat) and stable
    witness = None
    if not passed:
        j = int(np.argmax(R[ok][-1]))
        witness = {"s": float(s[ok][-1]), "t": float(t[j]), "ratio": float(Cs[-1])}
    return ConditionReport("eti1", passed, witness,
                           f"C_hat={C_hat:.6g}; tail {'stable' if stable else 'growing'} in s",
                           {"C_hat": C_hat, "s": s[ok].tolist(), "C_of_s": Cs.tolist()}, warn)


def check_limit_profile(st: SourceTerm, yf: YoungFunction,
                        M_list=(1e1, 1e2, 1e3, 1e4, 1e5), t_grid=None, p_grid=None,
                        x_samples=None, c=1.0, stall_ratio=0.5):
    """Rescaled quotient B(x, M t, a p)/f(M), a = c G^-1(M f(M)), against b(x) t^(q-1)."""
    M = np.asarray(M_list, float)
    if np.any(np.diff(M) <= 0):
        raise ValueError("M_list must be increasing")
    t = np.asarray(t_grid if t_grid is not None else np.linspace(0.05, 2.0, 40), float)
    pm = np.asarray(p_grid if p_grid is not None else [0.0, 0.5, 1.0, 2.0], float)
    x = _default_x(x_samples)
    X, T, P = _grid_points(x, t, pm)
    bx = st.b(X)
    quotients = []
    with np.errstate(over="ignore", invalid="ignore"):
        for Mk in M:
            a = c * inverse_G(yf, Mk * float(st.f(np.array([Mk]))[0]))
            quotients.append(st(X, Mk * T, a * P) / float(st.f(np.array([Mk]))[0]))
    Q = quotients[-1]
    if not all(np.all(np.isfinite(qk)) for qk in quotients):
        k = next(i for i, qk in enumerate(quotients) if not np.all(np.isfinite(qk)))
        i = int(np.flatnonzero(~np.isfinite(quotients[k]))[0])
        return ConditionReport("limitB", False, _witness(X, T, P, i, M=float(M[k])),
                               "non-finite rescaled quotient")
    # exponent and profile from the p = 0 slice at the largest M
    sel = (P[:, 0] == 0) & np.all(X == x[0], axis=1) & (T > 0)
    q_hat = 1.0 + float(np.polyfit(np.log(T[sel]), np.log(np.abs(Q[sel]) + 1e-300), 1)[0])
    b_hat = []
    for xi in x:
        xi2 = xi[None, :]
        b_hat.append(float(st(xi2, np.array([M[-1]]), np.zeros_like(xi2))[0]
                           / float(st.f(np.array([M[-1]]))[0])))
    dev = [float(np.max(np.abs(qk - bx * T ** (q_hat - 1)))) for qk in quotients]
    shrinking = bool(np.all(np.diff(dev) <= 1e-12 * (1 + dev[0])))
    converged = dev[-1] <= 1e-9 * (1 + np.max(np.abs(Q)))
    passed = shrinking and (converged or dev[-1] <= stall_ratio * dev[0])
    warn = [] if passed else ["deviations stall: limit condition not verified"]
    witness = None
    if not passed:
        i = int(np.argmax(np.abs(Q - bx * T ** (q_hat - 1))))
        witness = _witness(X, T, P, i, M=float(M[-1]), deviation=dev[-1])
    return ConditionReport("limitB", passed, witness,
                           f"q_hat={q_hat:.6g}; deviation {dev[0]:.3g} -> {dev[-1]:.3g}",
                           {"q_hat": q_hat, "b_hat": b_hat, "x": x.tolist(),
                            "M": M.tolist(), "deviation": dev}, warn)


def check_f0_negligible(st: SourceTerm, M_list=(1e1, 1e2, 1e3, 1e4, 1e5)):
    """f0(M)/f(M) along M_list; reported inside the limit condition family."""
    if st.f0 is None:
        return []
    M = np.asarray(M_list, float)
    return (np.asarray(st.f0(M)) / np.asarray(st.f(M))).tolist()


def _ps_grid(x, k):
    s = 2.0 ** -k
    tt = s * np.array([0.0, 0.5, 1.0])
    T, Pm = np.meshgrid(tt, tt, indexing="ij")
    keep = ~((T == 0) & (Pm == 0))
    T, Pm = T[keep], Pm[keep]
    X = np.repeat(x, len(T), axis=0)
    P = np.zeros_like(X)
    P[:, 0] = np.tile(Pm, len(x))
    return X, np.tile(T, len(x)), P


def check_PS(st: SourceTerm, yf: YoungFunction, L=None, x_samples=None, k_max=20,
             threshold=1e-3, slack=1e-12):
    """Positivity (P) and superlinearity (S) near (t, p) = 0.

    Returns ``(positivity_report, superlinearity_report)``.  The positivity
    report carries L_hat, the smallest L for which (P) holds on the grid.
    """
    L = st.L if L is None else float(L)
    x = _default_x(x_samples)
    # (P): dyadic grid t, |p| in (0, 1]
    lev = 2.0 ** -np.arange(0, k_max + 1)
    vals = np.concatenate([lev, 0.75 * lev])
    X, T, P = _grid_points(x, vals, np.concatenate([[0.0], vals]))
    B = st(X, T, P)
    gT = yf.g(T)
    L_hat = max(0.0, float(np.max(-B / gT)))
    s_p = B + L * gT
    i = int(np.argmin(s_p))
    p_ok = bool(s_p[i] >= -slack)
    pos = ConditionReport(
        "positivity", p_ok, None if p_ok else _witness(X, T, P, i, value=float(s_p[i])),
        f"min(B + L g) = {s_p[i]:.3g} with L={L:g}; L_hat={L_hat:.6g}",
        {"L": L, "L_hat": L_hat, "min_value": float(s_p[i])})

    rho, wit = [], None
    for k in range(k_max + 1):
        Xk, Tk, Pk = _ps_grid(x, k)
        pn = Pk[:, 0]
        r = np.abs(st(Xk, Tk, Pk) + L * yf.g(Tk)) / (yf.g(Tk) + yf.g(pn))
        j = int(np.argmax(r))
        rho.append(float(r[j]))
        wit = _witness(Xk, Tk, Pk, j, rho=float(r[j]), scale=float(2.0 ** -k))
    tail = np.asarray(rho[-5:])
    decreasing = bool(np.all(np.diff(tail) <= 1e-12))
    s_ok = decreasing and rho[-1] < threshold
    sup = ConditionReport("superlinearity", s_ok, None if s_ok else wit,
                          f"rho at scale 2^-{k_max} = {rho[-1]:.3g} (threshold {threshold:g})",
                          {"L": L, "rho": rho})
    return pos, sup


def check_subcritical(q, p, n):
    """p < q < p* with p* = n p / (n - p) (infinite when p >= n)."""
    warn = []
    if p < n:
        p_star = n * p / (n - p)
    else:
        p_star = math.inf
        warn.append("p >= n: critical exponent is infinite; the Liouville theorem needs p < n")
    passed = p < q < p_star
    witness = None if passed else {"q": q, "p": p, "n": n,
                                   "p_star": p_star if math.isfinite(p_star) else None}
    # pure-power Liouville structure r B >= t B': holds with r = q - 1 < p* - 1 iff q < p*
    return ConditionReport("subcritical", passed, witness,
                           f"p*={p_star:g}; need {p:g} < q={q:g} < p*",
                           {"p_star": p_star if math.isfinite(p_star) else None,
                            "liouville_r": q - 1 if passed else None}, warn)


def check_all(st: SourceTerm, yf: YoungFunction, n=2, p=None, x_samples=None):
    """Run every validator; ``p`` defaults to the regular-variation exponent of G."""
    from .young import regvar_exponent
    import warnings
    if p is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = regvar_exponent(yf)[0]
    reps = [check_growth(st, yf, x_samples), check_lieberman_bound(st, yf, x_samples),
            check_fG(st, yf, [0.5, 1.0, 2.0, 4.0]), check_eti1(st, yf),
            check_limit_profile(st, yf, x_samples=x_samples)]
    reps.extend(check_PS(st, yf, x_samples=x_samples))
    reps.append(check_subcritical(st.q, p, n))
    return reps
